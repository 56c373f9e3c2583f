#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace elastinv {

/// Objective callback: returns the value and writes the gradient, or returns
/// std::nullopt when x lies outside the objective's domain (the line search
/// then backtracks).
using Objective = std::function<std::optional<double>(const Eigen::VectorXd& x, Eigen::VectorXd& gradient)>;

struct BfgsOptions {
    int max_iterations = 500;
    /// Stop when ||g||_inf <= gradient_tolerance or
    /// ||g||_inf <= relative_gradient_tolerance * ||g_0||_inf.
    double gradient_tolerance = 1e-12;
    double relative_gradient_tolerance = 0.0;
    /// Sup-norm of the first trial step (and of the first step after a reset).
    double initial_step = 0.1;
    /// 0 selects the dense inverse-Hessian update; m > 0 keeps m pairs (L-BFGS).
    int memory = 0;
    double sufficient_decrease = 1e-4;
    double backtrack_factor = 0.5;
    int max_backtracks = 60;
    /// Optional box; trial points are clipped into it. Variables sitting on a
    /// bound with the gradient pointing outward are frozen for that iteration,
    /// and the stopping test and history use this projected gradient.
    std::optional<Eigen::VectorXd> lower;
    std::optional<Eigen::VectorXd> upper;
    bool keep_iterates = false;
};

struct BfgsIteration {
    int iteration = 0;
    double value = 0.0;
    double gradient_sup = 0.0;
    double step_length = 0.0;
};

enum class StopReason { GradientTolerance, MaxIterations, LineSearchFailure };

std::string to_string(StopReason reason);

struct BfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd gradient;
    std::vector<BfgsIteration> history;
    std::vector<Eigen::VectorXd> iterates;
    bool converged = false;
    StopReason reason = StopReason::MaxIterations;
    int evaluations = 0;
    int skipped_updates = 0;
};

/// Quasi-Newton minimization with Armijo backtracking. The inverse-Hessian
/// update is skipped whenever s^T y <= 1e-12 ||s|| ||y||. Throws NumericError
/// if the objective returns a non-finite value at an accepted point or at x0,
/// ParameterError if x0 is outside the domain.
BfgsResult minimize_bfgs(const Objective& objective, const Eigen::VectorXd& x0, const BfgsOptions& options);

} // namespace elastinv
