#include "elastinv/inversion.hpp"

#include <cmath>
#include <random>

#include "elastinv/errors.hpp"

namespace elastinv {

void MeasurementSet::validate(const Mesh& mesh) const {
    if (pairs.empty()) throw ParameterError("measurement set is empty");
    for (const auto& m : pairs) {
        m.load.nodal_values(mesh);
        if (m.trace.size() != 2 * mesh.num_neumann_nodes())
            throw ParameterError("measured trace does not match the mesh's Gamma_N nodes");
        if (!m.trace.allFinite()) throw ParameterError("measured trace must be finite");
    }
}

void NoiseSpec::validate() const {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ParameterError("noise level must lie in [0, 1)");
}

namespace {

Eigen::VectorXd perturb(const Eigen::VectorXd& trace, double epsilon, bool centered, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> delta(centered ? -1.0 : 0.0, 1.0);
    Eigen::VectorXd out(trace.size());
    for (Eigen::Index i = 0; i < trace.size(); ++i) out[i] = trace[i] * (1.0 + epsilon * delta(rng));
    return out;
}

} // namespace

Eigen::VectorXd add_noise(const Eigen::VectorXd& trace, const NoiseSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    return perturb(trace, spec.epsilon, spec.centered, rng);
}

MeasurementSet add_noise(const MeasurementSet& data, const NoiseSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    MeasurementSet out = data;
    for (auto& m : out.pairs) m.trace = perturb(m.trace, spec.epsilon, spec.centered, rng);
    return out;
}

MeasurementSet synthesize_measurements(const Mesh& mesh, const LameField& truth, const std::vector<SurfaceLoad>& loads,
                                       SolverOptions options) {
    const ElasticSolver solver(mesh, truth, options);
    MeasurementSet data;
    for (const auto& g : loads) data.pairs.push_back({g, solver.solve_neumann(g).trace_on_neumann});
    return data;
}

MeasurementSet synthesize_measurements_on(const Mesh& mesh, const Mesh& data_mesh, const LameField& data_truth,
                                          const std::vector<SurfaceLoad>& loads, SolverOptions options) {
    const ElasticSolver solver(data_mesh, data_truth, options);
    MeasurementSet data;
    for (const auto& g : loads) {
        if (!g.is_constant()) throw ParameterError("cross-mesh data synthesis supports constant loads only");
        const Eigen::VectorXd fine = solver.solve_neumann(g).trace_on_neumann;
        Eigen::VectorXd coarse(2 * mesh.num_neumann_nodes());
        for (int s = 0; s < mesh.num_neumann_nodes(); ++s) {
            const int node = mesh.neumann_nodes()[s];
            const int fine_slot = node < data_mesh.num_nodes() ? data_mesh.neumann_slot(node) : -1;
            if (fine_slot < 0 || (mesh.nodes()[node] - data_mesh.nodes()[node]).norm() > 1e-12)
                throw ParameterError("data mesh does not contain the inversion mesh's Gamma_N nodes");
            coarse.segment<2>(2 * s) = fine.segment<2>(2 * fine_slot);
        }
        data.pairs.push_back({g, std::move(coarse)});
    }
    return data;
}

KohnVogelius evaluate_kohn_vogelius(const Mesh& mesh, const LameField& field, const MeasurementSet& data, double rho,
                                    SolverOptions options) {
    if (!(rho >= 0.0)) throw ParameterError("rho must be non-negative");
    data.validate(mesh);
    const ElasticSolver solver(mesh, field, options);
    const int n = mesh.num_elements();

    KohnVogelius kv;
    kv.grad_lambda = Eigen::VectorXd::Zero(n);
    kv.grad_mu = Eigen::VectorXd::Zero(n);
    for (const auto& m : data.pairs) {
        const ForwardSolution un = solver.solve_neumann(m.load);
        const ForwardSolution ud = solver.solve_dirichlet(m.trace);
        for (int e = 0; e < n; ++e) {
            const double area = mesh.area(e);
            const Eigen::Matrix2d diff = un.strain[e] - ud.strain[e];
            kv.misfit += area * isotropic_energy_density(field.lambda()[e], field.mu()[e], diff);
            const double dn = un.divergence[e], dd = ud.divergence[e];
            kv.grad_lambda[e] += area * (dd * dd - dn * dn);
            kv.grad_mu[e] += area * 2.0 * (ud.strain[e].cwiseProduct(ud.strain[e]).sum() -
                                           un.strain[e].cwiseProduct(un.strain[e]).sum());
        }
    }
    for (int e = 0; e < n; ++e) {
        const double area = mesh.area(e);
        const double l = field.lambda()[e], mu = field.mu()[e];
        kv.regularization += 0.5 * rho * area * (l * l + mu * mu);
        kv.grad_lambda[e] += rho * l * area;
        kv.grad_mu[e] += rho * mu * area;
    }
    kv.value = kv.misfit + kv.regularization;
    return kv;
}

double kohn_vogelius(const Mesh& mesh, const LameField& field, const MeasurementSet& data, double rho,
                     SolverOptions options) {
    return evaluate_kohn_vogelius(mesh, field, data, rho, options).value;
}

Eigen::VectorXd kv_gradient(const Mesh& mesh, const LameField& field, const MeasurementSet& data, double rho,
                            SolverOptions options) {
    const auto kv = evaluate_kohn_vogelius(mesh, field, data, rho, options);
    Eigen::VectorXd g(2 * mesh.num_elements());
    g << kv.grad_lambda, kv.grad_mu;
    return g;
}

LameField ConstantParameterization::to_field(const Eigen::VectorXd& x, const LameBounds& bounds) const {
    if (x.size() != 2) throw ParameterError("constant parameterization expects 2 values");
    return LameField(Eigen::VectorXd::Constant(elements_, x[0]), Eigen::VectorXd::Constant(elements_, x[1]), bounds);
}

Eigen::VectorXd ConstantParameterization::from_field(const LameField& field) const {
    if (field.size() != elements_) throw ParameterError("field size mismatch");
    return Eigen::Vector2d(field.lambda().mean(), field.mu().mean());
}

Eigen::VectorXd ConstantParameterization::pull_back(const Eigen::VectorXd& grad_lambda,
                                                    const Eigen::VectorXd& grad_mu) const {
    return Eigen::Vector2d(grad_lambda.sum(), grad_mu.sum());
}

LameField ElementwiseParameterization::to_field(const Eigen::VectorXd& x, const LameBounds& bounds) const {
    if (x.size() != 2 * elements_) throw ParameterError("elementwise parameterization size mismatch");
    return LameField(x.head(elements_), x.tail(elements_), bounds);
}

Eigen::VectorXd ElementwiseParameterization::from_field(const LameField& field) const {
    if (field.size() != elements_) throw ParameterError("field size mismatch");
    Eigen::VectorXd x(2 * elements_);
    x << field.lambda(), field.mu();
    return x;
}

Eigen::VectorXd ElementwiseParameterization::pull_back(const Eigen::VectorXd& grad_lambda,
                                                       const Eigen::VectorXd& grad_mu) const {
    Eigen::VectorXd g(2 * elements_);
    g << grad_lambda, grad_mu;
    return g;
}

void InversionConfig::validate() const {
    if (!(rho >= 0.0)) throw ParameterError("rho must be non-negative");
    if (!(gradient_tolerance > 0.0) || !(relative_gradient_tolerance >= 0.0))
        throw ParameterError("tolerances must be positive");
    if (max_iterations < 0) throw ParameterError("max_iterations must be non-negative");
    if (!(initial_step > 0.0)) throw ParameterError("initial_step must be positive");
    if (!(sufficient_decrease > 0.0 && sufficient_decrease < 1.0) || !(backtrack_factor > 0.0 && backtrack_factor < 1.0))
        throw ParameterError("line search constants must lie in (0, 1)");
    bounds.validate();
}

int InversionConfig::effective_memory() const {
    if (memory >= 0) return memory;
    return parameterization == ParameterizationKind::Constant ? 0 : 10;
}

std::unique_ptr<Parameterization> make_parameterization(ParameterizationKind kind, const Mesh& mesh) {
    if (kind == ParameterizationKind::Constant) return std::make_unique<ConstantParameterization>(mesh.num_elements());
    return std::make_unique<ElementwiseParameterization>(mesh.num_elements());
}

InversionRun bfgs_minimize(const InversionConfig& config, const Mesh& mesh, const MeasurementSet& data) {
    config.validate();
    data.validate(mesh);
    const auto param = make_parameterization(config.parameterization, mesh);
    if (config.initial_field.size() != mesh.num_elements()) throw ParameterError("initial field does not match mesh");

    const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& gradient) -> std::optional<double> {
        LameField field;
        try {
            field = param->to_field(x, config.bounds);
        } catch (const ParameterError&) {
            return std::nullopt;
        }
        const auto kv = evaluate_kohn_vogelius(mesh, field, data, config.rho, config.solver);
        gradient = param->pull_back(kv.grad_lambda, kv.grad_mu);
        return kv.value;
    };

    BfgsOptions options;
    options.max_iterations = config.max_iterations;
    options.gradient_tolerance = config.gradient_tolerance;
    options.relative_gradient_tolerance = config.relative_gradient_tolerance;
    options.initial_step = config.initial_step;
    options.memory = config.effective_memory();
    options.sufficient_decrease = config.sufficient_decrease;
    options.backtrack_factor = config.backtrack_factor;
    options.keep_iterates = config.keep_iterates;
    if (config.project) {
        const auto& b = config.bounds;
        options.lower = param->from_field(LameField::constant(mesh, b.lambda_min, b.mu_min, b));
        options.upper = param->from_field(LameField::constant(mesh, b.lambda_max, b.mu_max, b));
    }

    const BfgsResult result = minimize_bfgs(objective, param->from_field(config.initial_field), options);

    InversionRun run;
    run.history = result.history;
    for (const auto& x : result.iterates) run.iterates.push_back(param->to_field(x, config.bounds));
    run.final_parameters = result.x;
    run.final_field = param->to_field(result.x, config.bounds);
    run.final_value = result.value;
    run.initial_value = result.history.front().value;
    run.converged = result.converged;
    run.reason = to_string(result.reason);
    run.evaluations = result.evaluations;
    return run;
}

} // namespace elastinv
