#pragma once

#include "afalab/matrix.hpp"

#include <vector>

namespace afalab {

/// Linear warmup to peak_lr over warmup_steps, then cosine decay to zero at
/// total_steps.
struct LrSchedule {
    double peak_lr = 1e-3;
    int warmup_steps = 0;
    int total_steps = 1;
};

double lr_at(const LrSchedule& schedule, int step);

struct AdamState {
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;
    long step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_params(const std::vector<Matrix*>& params);
};

/// Bias-corrected Adam step, in place. params and grads run parallel to the
/// accumulators in state.
void adam_update(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
                 AdamState& state, double lr);

}  // namespace afalab
