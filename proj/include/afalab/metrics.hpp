#pragma once

#include "afalab/env.hpp"
#include "afalab/pooling.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace afalab {

/// Mean over heads of the attention weight falling on masked cells; in
/// [0, 1] because each head's weights sum to one.
double attention_mass(const AttentionRecord& record, const BoolGrid& mask);

/// Mean over heads of the Shannon entropy -sum w ln w (nats), with
/// 0 ln 0 := 0.
double attention_entropy(const AttentionRecord& record);

/// Sample Pearson correlation; requires length >= 3 and nonzero variance on
/// both sides.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

/// One point of the robustness-predictor analysis: a trained policy
/// evaluated under one OOD condition.
struct PredictorSample {
    std::string run;
    PoolingKind kind = PoolingKind::afa;
    std::string condition;
    double mass = 0.0;        // mean attention mass within task masks
    double entropy = 0.0;     // mean attention entropy (nats)
    double ood_success = 0.0;
};

struct PredictorReport {
    double rho_mass = 0.0;     // corr(mass, OOD success)
    double rho_entropy = 0.0;  // corr(entropy, OOD success)
    std::vector<PredictorSample> samples;

    nlohmann::json to_json() const;
    static PredictorReport from_json(const nlohmann::json& j);
    std::string scatter_csv() const;  // run, kind, condition, mass, entropy, ood_success
};

/// Requires at least 3 samples spanning at least 2 pooling kinds.
PredictorReport predictor_report(const std::vector<PredictorSample>& samples);

}  // namespace afalab
