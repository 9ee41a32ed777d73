#include "afalab/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace afalab {

double attention_mass(const AttentionRecord& record, const BoolGrid& mask) {
    if (record.height != mask.height || record.width != mask.width)
        throw std::invalid_argument("attention_mass: record " + std::to_string(record.height) + "x" +
                                    std::to_string(record.width) + " vs mask " + std::to_string(mask.height) +
                                    "x" + std::to_string(mask.width));
    double total = 0.0;
    for (const auto& weights : record.head_weights) {
        double inside = 0.0;
        for (std::size_t c = 0; c < weights.size(); ++c)
            if (mask.cells[c]) inside += weights[c];
        total += inside;
    }
    return total / record.head_count();
}

double attention_entropy(const AttentionRecord& record) {
    double total = 0.0;
    for (const auto& weights : record.head_weights) {
        double h = 0.0;
        for (double w : weights)
            if (w > 0.0) h -= w * std::log(w);
        total += h;
    }
    return total / record.head_count();
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 3)
        throw std::invalid_argument("pearson: needs two equal-length series of at least 3 points");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson: undefined correlation, a series has zero variance");
    return sxy / std::sqrt(sxx * syy);
}

nlohmann::json PredictorReport::to_json() const {
    nlohmann::json samples_json = nlohmann::json::array();
    for (const PredictorSample& s : samples)
        samples_json.push_back({{"run", s.run},
                                {"kind", to_string(s.kind)},
                                {"condition", s.condition},
                                {"mass", s.mass},
                                {"entropy", s.entropy},
                                {"ood_success", s.ood_success}});
    return nlohmann::json{{"rho_mass", rho_mass},
                          {"rho_entropy", rho_entropy},
                          {"sample_count", samples.size()},
                          {"samples", samples_json}};
}

PredictorReport PredictorReport::from_json(const nlohmann::json& j) {
    PredictorReport r;
    r.rho_mass = j.at("rho_mass").get<double>();
    r.rho_entropy = j.at("rho_entropy").get<double>();
    for (const auto& s : j.at("samples")) {
        PredictorSample p;
        p.run = s.at("run").get<std::string>();
        p.kind = pooling_kind_from_string(s.at("kind").get<std::string>());
        p.condition = s.at("condition").get<std::string>();
        p.mass = s.at("mass").get<double>();
        p.entropy = s.at("entropy").get<double>();
        p.ood_success = s.at("ood_success").get<double>();
        r.samples.push_back(std::move(p));
    }
    return r;
}

std::string PredictorReport::scatter_csv() const {
    std::ostringstream out;
    out << "run,kind,condition,mass,entropy,ood_success\n";
    out.precision(17);
    for (const PredictorSample& s : samples)
        out << s.run << "," << to_string(s.kind) << "," << s.condition << "," << s.mass << "," << s.entropy
            << "," << s.ood_success << "\n";
    return out.str();
}

PredictorReport predictor_report(const std::vector<PredictorSample>& samples) {
    if (samples.size() < 3) throw std::invalid_argument("predictor_report: needs at least 3 samples");
    bool multiple_kinds = false;
    for (const PredictorSample& s : samples) multiple_kinds = multiple_kinds || s.kind != samples[0].kind;
    if (!multiple_kinds) throw std::invalid_argument("predictor_report: samples must span at least 2 pooling kinds");

    std::vector<double> mass, entropy, success;
    for (const PredictorSample& s : samples) {
        mass.push_back(s.mass);
        entropy.push_back(s.entropy);
        success.push_back(s.ood_success);
    }
    PredictorReport report;
    report.samples = samples;
    report.rho_mass = pearson(mass, success);
    report.rho_entropy = pearson(entropy, success);
    return report;
}

}  // namespace afalab
