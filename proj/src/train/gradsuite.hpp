#pragma once

#include <string>
#include <utility>
#include <vector>

namespace agcu {

/// Finite-difference verification report: worst relative error per checked
/// construct, double precision, step 1e-5.
struct GradReport {
    std::vector<std::pair<std::string, double>> items;
    double max_err = 0.0;
    bool passed(double tol = 1e-4) const { return max_err < tol; }
};

/// scale "ops": individual primitives; "blocks": the composite building
/// blocks and the loss; "full": the whole coupled network at side 32,
/// base width 4, plus everything the smaller scales cover.
GradReport gradient_suite(const std::string& scale);

}  // namespace agcu
