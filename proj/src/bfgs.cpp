#include "elastinv/bfgs.hpp"

#include <cmath>
#include <deque>

#include "elastinv/errors.hpp"

namespace elastinv {
namespace {

struct CurvaturePair {
    Eigen::VectorXd s;
    Eigen::VectorXd y;
    double rho;
};

// Inverse-Hessian approximation, dense or limited-memory.
class InverseHessian {
public:
    InverseHessian(int n, int memory) : n_(n), memory_(memory) { reset(); }

    void reset() {
        pairs_.clear();
        if (memory_ == 0) H_ = Eigen::MatrixXd::Identity(n_, n_);
        scale_ = 1.0;
        fresh_ = true;
    }

    bool fresh() const { return fresh_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& g) const {
        if (memory_ == 0) return H_ * g;
        // Two-loop recursion.
        Eigen::VectorXd q = g;
        std::vector<double> alpha(pairs_.size());
        for (int i = static_cast<int>(pairs_.size()) - 1; i >= 0; --i) {
            alpha[i] = pairs_[i].rho * pairs_[i].s.dot(q);
            q -= alpha[i] * pairs_[i].y;
        }
        q *= scale_;
        for (std::size_t i = 0; i < pairs_.size(); ++i) {
            const double beta = pairs_[i].rho * pairs_[i].y.dot(q);
            q += (alpha[i] - beta) * pairs_[i].s;
        }
        return q;
    }

    // Returns false when the curvature safeguard rejects the pair.
    bool update(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
        const double sy = s.dot(y);
        if (!(sy > 1e-12 * s.norm() * y.norm())) return false;
        const double rho = 1.0 / sy;
        if (memory_ == 0) {
            if (fresh_) H_ = (sy / y.squaredNorm()) * Eigen::MatrixXd::Identity(n_, n_);
            const Eigen::VectorXd Hy = H_ * y;
            const double yHy = y.dot(Hy);
            // (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded.
            H_ += (rho * rho * yHy + rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
            H_ = 0.5 * (H_ + H_.transpose()).eval();
        } else {
            pairs_.push_back({s, y, rho});
            if (static_cast<int>(pairs_.size()) > memory_) pairs_.pop_front();
            scale_ = sy / y.squaredNorm();
        }
        fresh_ = false;
        return true;
    }

private:
    int n_;
    int memory_;
    Eigen::MatrixXd H_;
    std::deque<CurvaturePair> pairs_;
    double scale_ = 1.0;
    bool fresh_ = true;
};

double sup_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Gradient with the entries of variables held at a bound (and pushed outward) zeroed.
Eigen::VectorXd free_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const BfgsOptions& options) {
    Eigen::VectorXd out = g;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const bool at_lower = options.lower && x[i] <= (*options.lower)[i] && g[i] > 0.0;
        const bool at_upper = options.upper && x[i] >= (*options.upper)[i] && g[i] < 0.0;
        if (at_lower || at_upper) out[i] = 0.0;
    }
    return out;
}

} // namespace

std::string to_string(StopReason reason) {
    switch (reason) {
    case StopReason::GradientTolerance: return "gradient_tolerance";
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::LineSearchFailure: return "line_search_failure";
    }
    return "unknown";
}

BfgsResult minimize_bfgs(const Objective& objective, const Eigen::VectorXd& x0, const BfgsOptions& options) {
    const auto n = x0.size();
    const auto project = [&](Eigen::VectorXd x) {
        if (options.lower) x = x.cwiseMax(*options.lower);
        if (options.upper) x = x.cwiseMin(*options.upper);
        return x;
    };

    BfgsResult result;
    result.x = project(x0);
    result.gradient.resize(n);
    const auto f0 = objective(result.x, result.gradient);
    ++result.evaluations;
    if (!f0) throw ParameterError("initial point outside the objective's domain");
    if (!std::isfinite(*f0) || !result.gradient.allFinite()) throw NumericError("non-finite objective at initial point");
    result.value = *f0;
    Eigen::VectorXd active_free = free_gradient(result.x, result.gradient, options);
    result.history.push_back({0, result.value, sup_norm(active_free), 0.0});
    if (options.keep_iterates) result.iterates.push_back(result.x);

    const double g0 = sup_norm(active_free);
    const auto small_gradient = [&](double gs) {
        return gs <= options.gradient_tolerance || gs <= options.relative_gradient_tolerance * g0;
    };

    InverseHessian H(static_cast<int>(n), options.memory);
    Eigen::VectorXd trial_gradient(n);
    for (int it = 1;; ++it) {
        if (small_gradient(sup_norm(active_free))) {
            result.converged = true;
            result.reason = StopReason::GradientTolerance;
            break;
        }
        if (it > options.max_iterations) {
            result.reason = StopReason::MaxIterations;
            break;
        }

        Eigen::VectorXd direction = -H.apply(active_free);
        for (Eigen::Index i = 0; i < direction.size(); ++i)
            if (active_free[i] == 0.0 && result.gradient[i] != 0.0) direction[i] = 0.0;
        if (!(active_free.dot(direction) < 0.0)) {
            H.reset();
            direction = -active_free;
        }
        double alpha = H.fresh() ? options.initial_step / sup_norm(direction) : 1.0;

        bool accepted = false;
        Eigen::VectorXd trial;
        double trial_value = 0.0;
        for (int k = 0; k <= options.max_backtracks; ++k, alpha *= options.backtrack_factor) {
            trial = project(result.x + alpha * direction);
            const double decrease = result.gradient.dot(trial - result.x);
            if (!(decrease < 0.0)) continue;
            const auto f = objective(trial, trial_gradient);
            ++result.evaluations;
            if (!f) continue;
            if (!std::isfinite(*f) || !trial_gradient.allFinite()) throw NumericError("non-finite objective value");
            if (*f < result.value && *f <= result.value + options.sufficient_decrease * decrease) {
                trial_value = *f;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            result.reason = StopReason::LineSearchFailure;
            break;
        }

        const Eigen::VectorXd s = trial - result.x;
        const Eigen::VectorXd y = trial_gradient - result.gradient;
        if (!H.update(s, y)) ++result.skipped_updates;
        result.x = trial;
        result.value = trial_value;
        result.gradient = trial_gradient;
        active_free = free_gradient(result.x, result.gradient, options);
        result.history.push_back({it, result.value, sup_norm(active_free), sup_norm(s)});
        if (options.keep_iterates) result.iterates.push_back(result.x);
    }
    return result;
}

} // namespace elastinv
