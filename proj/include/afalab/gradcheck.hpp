#pragma once

#include "afalab/model.hpp"

#include <string>
#include <vector>

namespace afalab {

/// Guarded relative error: |a - n| / max(1, |a|, |n|). The unit floor keeps
/// near-zero gradient entries from inflating the ratio past what central
/// differences can resolve.
double relative_error(double analytic, double numeric);

struct AuditRow {
    std::string component;
    bool applicable = true;  // mean pooling has no head parameters
    int checked_values = 0;
    double max_rel_err = 0.0;
    std::string worst_location;  // parameter (or grid input) with the largest error
};

struct AuditOptions {
    int seeds = 10;
    double fd_step = 1e-5;
    double threshold = 1e-5;
    // reduced dimensions keep the full-parameter sweep under the time budget
    int grid = 3;
    int dim = 8;
    int policy_hidden = 16;
    int temporal_dim = 4;
    int tl_maps = 2;
    int tl_hidden = 6;
    int afa_heads = 2;
    int afa_output_dim = 8;
    int batch = 3;
    int horizon = 9;
};

/// Central finite differences against the tape gradients of the BC loss,
/// over every trainable parameter of every pooling kind plus the policy.
/// The spatial softmax head has no parameters, so its row audits gradients
/// with respect to the token-grid inputs through the pooling subgraph
/// (alongside the policy parameters); the mean row is reported n/a.
std::vector<AuditRow> gradient_audit(const AuditOptions& options = {});

bool audit_passed(const std::vector<AuditRow>& rows, double threshold);

}  // namespace afalab
