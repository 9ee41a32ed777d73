#include "afalab/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace afalab {

double lr_at(const LrSchedule& schedule, int step) {
    if (schedule.warmup_steps < 0 || schedule.warmup_steps >= schedule.total_steps)
        throw std::invalid_argument("lr_at: warmup_steps must lie in [0, total_steps)");
    if (step < 0 || step > schedule.total_steps)
        throw std::invalid_argument("lr_at: step " + std::to_string(step) + " outside [0, " +
                                    std::to_string(schedule.total_steps) + "]");
    if (step < schedule.warmup_steps)
        return schedule.peak_lr * static_cast<double>(step) / schedule.warmup_steps;
    const double progress = static_cast<double>(step - schedule.warmup_steps) /
                            (schedule.total_steps - schedule.warmup_steps);
    return schedule.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamState AdamState::for_params(const std::vector<Matrix*>& params) {
    AdamState s;
    s.first_moment.reserve(params.size());
    s.second_moment.reserve(params.size());
    for (const Matrix* p : params) {
        s.first_moment.emplace_back(p->rows(), p->cols());
        s.second_moment.emplace_back(p->rows(), p->cols());
    }
    return s;
}

void adam_update(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
                 AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw std::invalid_argument("adam_update: parameter/gradient/state counts disagree");
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        const Matrix& g = *grads[k];
        if (!p.same_shape(g))
            throw std::invalid_argument("adam_update: parameter " + p.shape_str() + " vs gradient " + g.shape_str());
        Matrix& m = state.first_moment[k];
        Matrix& v = state.second_moment[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

}  // namespace afalab
