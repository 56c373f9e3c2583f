#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "elastinv/bfgs.hpp"
#include "elastinv/fem.hpp"
#include "elastinv/mesh.hpp"

namespace elastinv {

/// f_k = Lambda(C) g_k: a load and the Gamma_N trace it produced.
struct Measurement {
    SurfaceLoad load;
    Eigen::VectorXd trace;
};

struct MeasurementSet {
    std::vector<Measurement> pairs;

    /// Throws ParameterError unless K >= 1 and every pair matches mesh's Gamma_N.
    void validate(const Mesh& mesh) const;
};

/// Multiplicative noise f * (1 + epsilon * delta) per trace component.
/// delta ~ U[0, 1] by default, U[-1, 1] when `centered`.
struct NoiseSpec {
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    bool centered = false;

    void validate() const;
};

Eigen::VectorXd add_noise(const Eigen::VectorXd& trace, const NoiseSpec& spec);
/// One generator stream across all pairs, in pair order.
MeasurementSet add_noise(const MeasurementSet& data, const NoiseSpec& spec);

/// Exact traces for `truth` on the inversion mesh (inverse crime).
MeasurementSet synthesize_measurements(const Mesh& mesh, const LameField& truth, const std::vector<SurfaceLoad>& loads,
                                       SolverOptions options = {});

/// Traces computed on `data_mesh` (a refine_uniform() of `mesh`, so coarse node ids
/// are preserved) and injected at the Gamma_N nodes of `mesh`. Constant loads only.
MeasurementSet synthesize_measurements_on(const Mesh& mesh, const Mesh& data_mesh, const LameField& data_truth,
                                          const std::vector<SurfaceLoad>& loads, SolverOptions options = {});

/// Kohn-Vogelius misfit plus (rho / 2) * int (lambda^2 + mu^2), with the
/// per-element derivative with respect to lambda_e and mu_e.
struct KohnVogelius {
    double value = 0.0;
    double misfit = 0.0;
    double regularization = 0.0;
    Eigen::VectorXd grad_lambda;
    Eigen::VectorXd grad_mu;
};

KohnVogelius evaluate_kohn_vogelius(const Mesh& mesh, const LameField& field, const MeasurementSet& data, double rho,
                                    SolverOptions options = {});

double kohn_vogelius(const Mesh& mesh, const LameField& field, const MeasurementSet& data, double rho,
                     SolverOptions options = {});

/// Stacked (dJ/dlambda_e, dJ/dmu_e): first all lambda entries, then all mu entries.
Eigen::VectorXd kv_gradient(const Mesh& mesh, const LameField& field, const MeasurementSet& data, double rho,
                            SolverOptions options = {});

/// Maps an optimizer vector to a Lame field and pulls element gradients back.
class Parameterization {
public:
    virtual ~Parameterization() = default;
    virtual int size() const = 0;
    /// Throws ParameterError if x is outside `bounds`.
    virtual LameField to_field(const Eigen::VectorXd& x, const LameBounds& bounds) const = 0;
    virtual Eigen::VectorXd from_field(const LameField& field) const = 0;
    virtual Eigen::VectorXd pull_back(const Eigen::VectorXd& grad_lambda, const Eigen::VectorXd& grad_mu) const = 0;
};

/// (lambda, mu) in R^2, constant over the mesh.
class ConstantParameterization final : public Parameterization {
public:
    explicit ConstantParameterization(int num_elements) : elements_(num_elements) {}
    int size() const override { return 2; }
    LameField to_field(const Eigen::VectorXd& x, const LameBounds& bounds) const override;
    /// Area-free mean of the element values.
    Eigen::VectorXd from_field(const LameField& field) const override;
    Eigen::VectorXd pull_back(const Eigen::VectorXd& grad_lambda, const Eigen::VectorXd& grad_mu) const override;

private:
    int elements_;
};

/// One (lambda, mu) per element, stacked [lambda_0..lambda_{n-1}, mu_0..mu_{n-1}].
class ElementwiseParameterization final : public Parameterization {
public:
    explicit ElementwiseParameterization(int num_elements) : elements_(num_elements) {}
    int size() const override { return 2 * elements_; }
    LameField to_field(const Eigen::VectorXd& x, const LameBounds& bounds) const override;
    Eigen::VectorXd from_field(const LameField& field) const override;
    Eigen::VectorXd pull_back(const Eigen::VectorXd& grad_lambda, const Eigen::VectorXd& grad_mu) const override;

private:
    int elements_;
};

enum class ParameterizationKind { Constant, Elementwise };

struct InversionConfig {
    double rho = 0.0;
    ParameterizationKind parameterization = ParameterizationKind::Constant;
    /// Starting field; for the constant parameterization its element mean is used.
    LameField initial_field;
    int max_iterations = 500;
    double gradient_tolerance = 1e-12;
    double relative_gradient_tolerance = 0.0;
    double initial_step = 0.1;
    /// 0: dense BFGS. Default switches to m = 10 for the elementwise case.
    int memory = -1;
    double sufficient_decrease = 1e-4;
    double backtrack_factor = 0.5;
    /// Admissible box; trial fields outside it are rejected by the line search,
    /// or clipped into it when `project` is set.
    LameBounds bounds{1e-6, 1e6, 1e-6, 1e6};
    bool project = false;
    bool keep_iterates = false;
    SolverOptions solver;

    void validate() const;
    int effective_memory() const;
};

struct InversionRun {
    std::vector<BfgsIteration> history;
    std::vector<LameField> iterates;  // only with keep_iterates
    LameField final_field;
    Eigen::VectorXd final_parameters;
    double final_value = 0.0;
    double initial_value = 0.0;
    bool converged = false;
    std::string reason;
    int evaluations = 0;
};

std::unique_ptr<Parameterization> make_parameterization(ParameterizationKind kind, const Mesh& mesh);

InversionRun bfgs_minimize(const InversionConfig& config, const Mesh& mesh, const MeasurementSet& data);

} // namespace elastinv
