#include "elastinv/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "elastinv/errors.hpp"
#include "elastinv/ntd.hpp"

namespace elastinv {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

const std::array<std::pair<ExperimentKind, const char*>, 7> kKindNames{{
    {ExperimentKind::Example1, "example1"},
    {ExperimentKind::Example2, "example2"},
    {ExperimentKind::Example3, "example3"},
    {ExperimentKind::Monotonicity, "monotonicity"},
    {ExperimentKind::Stability, "stability"},
    {ExperimentKind::Forward, "forward"},
    {ExperimentKind::Custom, "custom"},
}};

bool is_inversion_kind(ExperimentKind kind) {
    return kind == ExperimentKind::Example1 || kind == ExperimentKind::Example2 || kind == ExperimentKind::Example3 ||
           kind == ExperimentKind::Custom;
}

// Strict field readers: unknown keys and wrong types are config errors.
class Reader {
public:
    Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
        for (const auto& [key, value] : obj_.items()) unseen_.push_back(key);
    }

    template <class T>
    void get(const char* key, T& out) {
        const auto it = obj_.find(key);
        if (it == obj_.end()) return;
        unseen_.erase(std::remove(unseen_.begin(), unseen_.end(), key), unseen_.end());
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        const auto it = obj_.find(key);
        if (it == obj_.end()) return nullptr;
        unseen_.erase(std::remove(unseen_.begin(), unseen_.end(), key), unseen_.end());
        return &*it;
    }

    void finish() const {
        if (!unseen_.empty()) throw ConfigError(where_ + ": unknown key '" + unseen_.front() + "'");
    }

private:
    const json& obj_;
    std::string where_;
    std::vector<std::string> unseen_;
};

std::string fmt17(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << text;
}

void write_json(const std::filesystem::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

void write_history(const std::filesystem::path& path, const std::vector<BfgsIteration>& history) {
    std::ostringstream os;
    os << "iteration,J,grad_sup,step\n";
    for (const auto& h : history)
        os << h.iteration << ',' << fmt17(h.value) << ',' << fmt17(h.gradient_sup) << ',' << fmt17(h.step_length)
           << '\n';
    write_text(path, os.str());
}

json vec2(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

LameBounds bounds_from(const std::array<double, 4>& b) { return LameBounds{b[0], b[1], b[2], b[3]}; }

// Truth on a refined data mesh: analytic types are resampled, tabulated fields
// are inherited by the four children of each element.
LameField build_data_truth(const Mesh& data_mesh, const Mesh& mesh, const LameField& truth, const TruthSpec& spec) {
    if (spec.type != "file") return build_truth(data_mesh, spec);
    Eigen::VectorXd l(data_mesh.num_elements()), m(data_mesh.num_elements());
    for (int e = 0; e < data_mesh.num_elements(); ++e) {
        l[e] = truth.lambda()[e / 4];
        m[e] = truth.mu()[e / 4];
    }
    (void)mesh;
    return LameField(l, m, truth.bounds());
}

json mesh_summary(const Mesh& mesh) {
    return json{{"nodes", mesh.num_nodes()},
                {"elements", mesh.num_elements()},
                {"boundary_edges", mesh.boundary_edges().size()},
                {"dirichlet_edges", mesh.count_edges(BoundaryTag::Dirichlet)},
                {"neumann_nodes", mesh.num_neumann_nodes()}};
}

struct InversionContext {
    Mesh mesh;
    LameField truth;
    MeasurementSet data;
};

InversionContext prepare_inversion(const ExperimentConfig& config) {
    InversionContext ctx{build_mesh(config.mesh), {}, {}};
    ctx.truth = build_truth(ctx.mesh, config.truth);
    const auto loads = build_loads(config);
    if (config.data_mesh == "refine") {
        const Mesh fine = refine_uniform(ctx.mesh);
        ctx.data = synthesize_measurements_on(ctx.mesh, fine, build_data_truth(fine, ctx.mesh, ctx.truth, config.truth),
                                              loads);
    } else {
        ctx.data = synthesize_measurements(ctx.mesh, ctx.truth, loads);
    }
    return ctx;
}

ResultBundle run_inversion_suite(const ExperimentConfig& config) {
    namespace fs = std::filesystem;
    const fs::path out(config.output);
    const InversionContext ctx = prepare_inversion(config);
    {
        std::ostringstream os;
        write_mesh(os, ctx.mesh);
        write_text(out / "mesh.txt", os.str());
    }
    write_field(out / "truth_field.txt", ctx.mesh, ctx.truth);

    const bool constant = config.inversion.parameterization == "constant";
    const bool bumps = config.kind == ExperimentKind::Example3 || config.truth.type == "gaussian_bumps_lambda";

    ResultBundle bundle;
    json& doc = bundle.document;
    doc["kind"] = to_string(config.kind);
    doc["schema_version"] = kConfigSchemaVersion;
    doc["mesh"] = mesh_summary(ctx.mesh);
    doc["data_mesh"] = config.data_mesh;
    if (bumps) {
        const auto c = top_fraction_centroids(ctx.mesh, ctx.truth.lambda());
        doc["truth_bump_centroids"] = json::array({vec2(c[0]), vec2(c[1])});
        doc["truth_bump_matching_error"] = bump_matching_error(c, kBumpCentres);
    }
    doc["rows"] = json::array();

    for (std::size_t i = 0; i < config.settings.size(); ++i) {
        const auto& setting = config.settings[i];
        const MeasurementSet data =
            add_noise(ctx.data, NoiseSpec{setting.epsilon, config.noise_seed, config.centered_noise});
        const InversionConfig inv = build_inversion_config(config.inversion, ctx.mesh, setting.rho);
        const InversionRun run = bfgs_minimize(inv, ctx.mesh, data);

        const std::string tag = std::to_string(i);
        write_history(out / ("history_" + tag + ".csv"), run.history);
        write_field(out / ("field_" + tag + ".txt"), ctx.mesh, run.final_field);

        json row{{"index", i},
                 {"epsilon", setting.epsilon},
                 {"rho", setting.rho},
                 {"noise_seed", config.noise_seed},
                 {"initial_J", run.initial_value},
                 {"final_J", run.final_value},
                 {"iterations", run.history.back().iteration},
                 {"evaluations", run.evaluations},
                 {"final_grad_sup", run.history.back().gradient_sup},
                 {"converged", run.converged},
                 {"reason", run.reason},
                 {"history_file", "history_" + tag + ".csv"},
                 {"field_file", "field_" + tag + ".txt"}};
        if (constant) {
            const double le = ctx.truth.lambda().mean(), me = ctx.truth.mu().mean();
            const double lc = run.final_parameters[0], mc = run.final_parameters[1];
            row["initial"] = json::array({config.inversion.initial[0], config.inversion.initial[1]});
            row["computed"] = json::array({lc, mc});
            row["exact"] = json::array({le, me});
            row["relative_error"] = json::array({std::abs(lc - le) / std::abs(le), std::abs(mc - me) / std::abs(me)});
        } else {
            const LameField& start = inv.initial_field;
            row["relative_l2_error"] = {
                {"lambda", relative_l2_error(ctx.mesh, run.final_field.lambda(), ctx.truth.lambda())},
                {"mu", relative_l2_error(ctx.mesh, run.final_field.mu(), ctx.truth.mu())}};
            row["initial_relative_l2_error"] = {
                {"lambda", relative_l2_error(ctx.mesh, start.lambda(), ctx.truth.lambda())},
                {"mu", relative_l2_error(ctx.mesh, start.mu(), ctx.truth.mu())}};
        }
        if (bumps) {
            const auto c = top_fraction_centroids(ctx.mesh, run.final_field.lambda());
            row["bump_centroids"] = json::array({vec2(c[0]), vec2(c[1])});
            row["bump_matching_error"] = bump_matching_error(c, kBumpCentres);
        }
        doc["rows"].push_back(std::move(row));
    }
    doc["status"] = "complete";
    return bundle;
}

ResultBundle run_monotonicity(const ExperimentConfig& config) {
    const Mesh mesh = build_mesh(config.mesh);
    const auto loads = build_loads(config);
    const auto pairs =
        random_ordered_pairs(mesh, config.campaign.pairs, config.campaign.seed, bounds_from(config.campaign.box));
    const double tol = config.campaign.tolerance;
    const SparseMatrix M = boundary_mass_matrix(mesh);

    ResultBundle bundle;
    json& doc = bundle.document;
    doc["kind"] = to_string(config.kind);
    doc["schema_version"] = kConfigSchemaVersion;
    doc["mesh"] = mesh_summary(mesh);
    doc["tolerance"] = tol;
    doc["pairs"] = json::array();
    json violations = json::array();
    double worst_energy = 0.0, worst_adjoint = 0.0, min_gap = std::numeric_limits<double>::infinity();

    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto& pair = pairs[p];
        const NtDOperator op1 = build_ntd(mesh, pair.first), op2 = build_ntd(mesh, pair.second);
        const double gap = difference_spectrum(op1, op2).minCoeff();
        min_gap = std::min(min_gap, gap);
        const double defect = std::max(op1.self_adjointness_defect(), op2.self_adjointness_defect());
        worst_adjoint = std::max(worst_adjoint, defect);
        if (gap < -tol) violations.push_back({{"pair", p}, {"check", "loewner"}, {"value", gap}});
        if (defect > 1e-10) violations.push_back({{"pair", p}, {"check", "self_adjoint"}, {"value", defect}});

        json entry{{"index", p}, {"loewner_gap", gap}, {"self_adjointness_defect", defect}, {"loads", json::array()}};
        const ElasticSolver solver(mesh, pair.first);
        for (std::size_t k = 0; k < loads.size(); ++k) {
            const SandwichValues s = monotonicity_sandwich(mesh, pair, loads[k]);
            const bool ok = s.holds(tol);
            if (!ok) violations.push_back({{"pair", p}, {"load", k}, {"check", "sandwich"}});
            const Eigen::VectorXd g = loads[k].nodal_values(mesh);
            const ForwardSolution u = solver.solve_neumann_nodal(g);
            const double form = op1.form(g), energy = strain_energy(mesh, pair.first, u.strain);
            const double rel = std::abs(form - energy) / std::abs(energy);
            worst_energy = std::max(worst_energy, rel);
            if (rel > 1e-10) violations.push_back({{"pair", p}, {"load", k}, {"check", "energy_identity"}, {"value", rel}});
            entry["loads"].push_back({{"load", k},
                                      {"lhs", s.lhs},
                                      {"mid", s.mid},
                                      {"rhs", s.rhs},
                                      {"sandwich_holds", ok},
                                      {"energy_identity_error", rel}});
        }
        doc["pairs"].push_back(std::move(entry));
    }
    (void)M;
    doc["summary"] = {{"pairs", pairs.size()},
                      {"min_loewner_gap", pairs.empty() ? 0.0 : min_gap},
                      {"max_energy_identity_error", worst_energy},
                      {"max_self_adjointness_defect", worst_adjoint},
                      {"violations", violations.size()}};
    doc["violations"] = violations;
    doc["status"] = "complete";
    bundle.violations = static_cast<int>(violations.size());
    return bundle;
}

ResultBundle run_stability(const ExperimentConfig& config) {
    const Mesh mesh = build_mesh(config.mesh);
    const auto family =
        quadrant_family(mesh, config.campaign.pairs, config.campaign.seed, bounds_from(config.campaign.box));
    const StabilityReport report = stability_ratio_experiment(mesh, family);

    ResultBundle bundle;
    json& doc = bundle.document;
    doc["kind"] = to_string(config.kind);
    doc["schema_version"] = kConfigSchemaVersion;
    doc["mesh"] = mesh_summary(mesh);
    doc["entries"] = json::array();
    for (const auto& e : report.entries) {
        const auto& pair = family[e.pair_index];
        json lam1 = json::array(), lam2 = json::array(), mu1 = json::array(), mu2 = json::array();
        // One representative per quadrant.
        std::array<int, 4> rep{-1, -1, -1, -1};
        for (int el = 0; el < mesh.num_elements(); ++el) {
            const int q = disk_quadrant(mesh.centroid(el));
            if (rep[q] < 0) rep[q] = el;
        }
        for (int q = 0; q < 4; ++q) {
            lam1.push_back(rep[q] < 0 ? 0.0 : pair.first.lambda()[rep[q]]);
            mu1.push_back(rep[q] < 0 ? 0.0 : pair.first.mu()[rep[q]]);
            lam2.push_back(rep[q] < 0 ? 0.0 : pair.second.lambda()[rep[q]]);
            mu2.push_back(rep[q] < 0 ? 0.0 : pair.second.mu()[rep[q]]);
        }
        doc["entries"].push_back({{"pair", e.pair_index},
                                  {"quadrant_lambda_1", lam1},
                                  {"quadrant_mu_1", mu1},
                                  {"quadrant_lambda_2", lam2},
                                  {"quadrant_mu_2", mu2},
                                  {"parameter_distance", e.parameter_distance},
                                  {"operator_distance", e.operator_distance},
                                  {"ratio", std::isfinite(e.ratio) ? json(e.ratio) : json(nullptr)}});
    }
    const int violations = static_cast<int>(report.uniqueness_failures.size()) + (report.all_ratios_finite() ? 0 : 1);
    doc["summary"] = {{"pairs", family.size()},
                      {"evaluated", report.entries.size()},
                      {"skipped", report.skipped},
                      {"uniqueness_failures", report.uniqueness_failures},
                      {"all_ratios_finite", report.all_ratios_finite()},
                      {"empirical_constant", report.entries.empty() ? json(nullptr) : json(report.max_ratio)},
                      {"min_ratio", report.entries.empty() ? json(nullptr) : json(report.min_ratio)},
                      {"histogram_edges", report.histogram_edges},
                      {"histogram_counts", report.histogram_counts},
                      {"violations", violations}};
    doc["status"] = "complete";
    bundle.violations = violations;
    return bundle;
}

} // namespace

std::string to_string(ExperimentKind kind) {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "custom";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
    for (const auto& [k, n] : kKindNames)
        if (name == n) return k;
    throw ConfigError("unknown experiment kind '" + name + "'");
}

ExperimentConfig default_config(ExperimentKind kind) {
    ExperimentConfig c;
    c.kind = kind;
    c.loads = {{0.1, 0.1}, {0.1, 0.2}, {0.2, 0.1}, {0.3, 0.5}};
    c.output = "results/" + to_string(kind);
    c.inversion.gradient_tolerance = 1e-10;
    switch (kind) {
    case ExperimentKind::Example1:
    case ExperimentKind::Custom:
    case ExperimentKind::Forward:
        c.settings = {{0.0, 0.0}, {0.03, 1e-5}, {0.05, 1e-5}};
        break;
    case ExperimentKind::Example3:
        c.mesh.dirichlet_arc = {0.5 * kPi, kPi};
        c.truth.type = "gaussian_bumps_lambda";
        [[fallthrough]];
    case ExperimentKind::Example2:
        if (kind == ExperimentKind::Example2) {
            c.truth.type = "radial_mu";
            c.truth.lambda = 1.0;
        }
        c.settings = {{0.0, 0.0}, {0.03, 1e-4}};
        c.inversion.parameterization = "elementwise";
        c.inversion.initial = {0.3, 0.5};
        c.inversion.max_iterations = 5000;
        c.inversion.gradient_tolerance = 1e-12;
        c.inversion.project = true;
        c.inversion.bounds = {1e-3, 1e3, 1e-3, 1e3};
        break;
    case ExperimentKind::Monotonicity:
        c.campaign.pairs = 20;
        c.campaign.seed = 7;
        break;
    case ExperimentKind::Stability:
        c.campaign.pairs = 30;
        c.campaign.seed = 11;
        break;
    }
    return c;
}

void ExperimentConfig::validate() const {
    const auto bad = [](const std::string& what) { throw ConfigError(what); };
    if (schema_version != kConfigSchemaVersion) bad("unsupported schema_version " + std::to_string(schema_version));
    if (!(mesh.target_h > 0.0 && mesh.target_h < 1.0)) bad("mesh.target_h must lie in (0, 1)");
    try {
        BoundaryPartitionSpec{mesh.dirichlet_arc[0], mesh.dirichlet_arc[1]}.validate();
    } catch (const PartitionError& e) {
        bad(std::string("mesh.dirichlet_arc: ") + e.what());
    }
    if (data_mesh != "same" && data_mesh != "refine") bad("data_mesh must be 'same' or 'refine'");
    const auto& types = {"constant", "radial_mu", "gaussian_bumps_lambda", "file"};
    if (std::find(types.begin(), types.end(), truth.type) == types.end()) bad("unknown truth.type '" + truth.type + "'");
    if (truth.type == "file" && !std::filesystem::exists(truth.path)) bad("truth.path does not exist: " + truth.path);
    if ((truth.type == "constant" && !(truth.lambda > 0.0 && truth.mu > 0.0)) ||
        (truth.type == "radial_mu" && !(truth.lambda > 0.0)))
        bad("truth parameters must be positive");
    for (const auto& g : loads)
        if (!std::isfinite(g[0]) || !std::isfinite(g[1])) bad("loads must be finite");
    if (is_inversion_kind(kind) || kind == ExperimentKind::Forward || kind == ExperimentKind::Monotonicity)
        if (loads.empty()) bad("at least one load is required");
    if (is_inversion_kind(kind) && settings.empty()) bad("at least one (epsilon, rho) setting is required");
    for (const auto& s : settings)
        if (!(s.epsilon >= 0.0 && s.epsilon < 1.0) || !(s.rho >= 0.0)) bad("settings need 0 <= epsilon < 1, rho >= 0");
    const auto& inv = inversion;
    if (inv.parameterization != "constant" && inv.parameterization != "elementwise")
        bad("inversion.parameterization must be 'constant' or 'elementwise'");
    if (!(inv.initial[0] > 0.0 && inv.initial[1] > 0.0)) bad("inversion.initial must be positive");
    if (inv.max_iterations < 0 || !(inv.gradient_tolerance > 0.0) || !(inv.relative_gradient_tolerance >= 0.0) ||
        !(inv.initial_step > 0.0) || !(inv.sufficient_decrease > 0.0 && inv.sufficient_decrease < 1.0) ||
        !(inv.backtrack_factor > 0.0 && inv.backtrack_factor < 1.0))
        bad("invalid inversion optimizer settings");
    try {
        bounds_from(inv.bounds).validate();
        bounds_from(campaign.box).validate();
    } catch (const ParameterError& e) {
        bad(std::string("bounds: ") + e.what());
    }
    if (!bounds_from(inv.bounds).contains(inv.initial[0], inv.initial[1])) bad("inversion.initial outside inversion.bounds");
    if (campaign.pairs < 0 || !(campaign.tolerance > 0.0)) bad("invalid campaign settings");
    if (output.empty()) bad("output directory must be set");
}

json to_json(const ExperimentConfig& c) {
    json settings = json::array();
    for (const auto& s : c.settings) settings.push_back({{"epsilon", s.epsilon}, {"rho", s.rho}});
    return json{
        {"schema_version", c.schema_version},
        {"kind", to_string(c.kind)},
        {"mesh", {{"target_h", c.mesh.target_h}, {"dirichlet_arc", c.mesh.dirichlet_arc}}},
        {"data_mesh", c.data_mesh},
        {"truth", {{"type", c.truth.type}, {"lambda", c.truth.lambda}, {"mu", c.truth.mu}, {"path", c.truth.path}}},
        {"loads", c.loads},
        {"settings", settings},
        {"noise", {{"seed", c.noise_seed}, {"centered", c.centered_noise}}},
        {"inversion",
         {{"parameterization", c.inversion.parameterization},
          {"initial", c.inversion.initial},
          {"max_iterations", c.inversion.max_iterations},
          {"gradient_tolerance", c.inversion.gradient_tolerance},
          {"relative_gradient_tolerance", c.inversion.relative_gradient_tolerance},
          {"initial_step", c.inversion.initial_step},
          {"memory", c.inversion.memory},
          {"sufficient_decrease", c.inversion.sufficient_decrease},
          {"backtrack_factor", c.inversion.backtrack_factor},
          {"project", c.inversion.project},
          {"bounds", c.inversion.bounds}}},
        {"campaign",
         {{"pairs", c.campaign.pairs},
          {"seed", c.campaign.seed},
          {"box", c.campaign.box},
          {"tolerance", c.campaign.tolerance}}},
        {"output", c.output},
    };
}

ExperimentConfig config_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
    const auto kind_it = doc.find("kind");
    if (kind_it == doc.end() || !kind_it->is_string()) throw ConfigError("config: 'kind' is required");
    ExperimentConfig c = default_config(parse_experiment_kind(kind_it->get<std::string>()));

    Reader top(doc, "config");
    std::string kind_name;
    top.get("kind", kind_name);
    if (!doc.contains("schema_version")) throw ConfigError("config: 'schema_version' is required");
    top.get("schema_version", c.schema_version);
    if (const json* m = top.child("mesh")) {
        Reader r(*m, "mesh");
        r.get("target_h", c.mesh.target_h);
        r.get("dirichlet_arc", c.mesh.dirichlet_arc);
        r.finish();
    }
    top.get("data_mesh", c.data_mesh);
    if (const json* t = top.child("truth")) {
        Reader r(*t, "truth");
        r.get("type", c.truth.type);
        r.get("lambda", c.truth.lambda);
        r.get("mu", c.truth.mu);
        r.get("path", c.truth.path);
        r.finish();
    }
    top.get("loads", c.loads);
    if (const json* s = top.child("settings")) {
        if (!s->is_array()) throw ConfigError("settings: expected an array");
        c.settings.clear();
        for (const auto& item : *s) {
            NoiseRho nr;
            Reader r(item, "settings[]");
            r.get("epsilon", nr.epsilon);
            r.get("rho", nr.rho);
            r.finish();
            c.settings.push_back(nr);
        }
    }
    if (const json* n = top.child("noise")) {
        Reader r(*n, "noise");
        r.get("seed", c.noise_seed);
        r.get("centered", c.centered_noise);
        r.finish();
    }
    if (const json* i = top.child("inversion")) {
        Reader r(*i, "inversion");
        auto& v = c.inversion;
        r.get("parameterization", v.parameterization);
        r.get("initial", v.initial);
        r.get("max_iterations", v.max_iterations);
        r.get("gradient_tolerance", v.gradient_tolerance);
        r.get("relative_gradient_tolerance", v.relative_gradient_tolerance);
        r.get("initial_step", v.initial_step);
        r.get("memory", v.memory);
        r.get("sufficient_decrease", v.sufficient_decrease);
        r.get("backtrack_factor", v.backtrack_factor);
        r.get("project", v.project);
        r.get("bounds", v.bounds);
        r.finish();
    }
    if (const json* p = top.child("campaign")) {
        Reader r(*p, "campaign");
        r.get("pairs", c.campaign.pairs);
        r.get("seed", c.campaign.seed);
        r.get("box", c.campaign.box);
        r.get("tolerance", c.campaign.tolerance);
        r.finish();
    }
    top.get("output", c.output);
    top.finish();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    return config_from_json(doc);
}

Mesh build_mesh(const MeshSpec& spec) {
    return make_disk_mesh(spec.target_h, BoundaryPartitionSpec{spec.dirichlet_arc[0], spec.dirichlet_arc[1]});
}

LameField build_truth(const Mesh& mesh, const TruthSpec& spec) {
    if (spec.type == "constant") return LameField::constant(mesh, spec.lambda, spec.mu);
    if (spec.type == "radial_mu") {
        const double lambda = spec.lambda;
        return LameField::sampled(mesh, [lambda](const Eigen::Vector2d& x) { return std::pair{lambda, x.norm()}; });
    }
    if (spec.type == "gaussian_bumps_lambda") {
        return LameField::sampled(mesh, [](const Eigen::Vector2d& x) {
            const double a = (x - kBumpCentres[0]).squaredNorm(), b = (x - kBumpCentres[1]).squaredNorm();
            return std::pair{std::exp(-5.0 * a) + std::exp(-5.0 * b), x.norm()};
        });
    }
    if (spec.type == "file") {
        LameField f = read_field(spec.path);
        if (f.size() != mesh.num_elements()) throw ConfigError("truth field file does not match the mesh");
        return f;
    }
    throw ConfigError("unknown truth type '" + spec.type + "'");
}

std::vector<SurfaceLoad> build_loads(const ExperimentConfig& config) {
    std::vector<SurfaceLoad> loads;
    for (const auto& g : config.loads) loads.push_back(SurfaceLoad::constant({g[0], g[1]}));
    return loads;
}

InversionConfig build_inversion_config(const InversionSpec& spec, const Mesh& mesh, double rho) {
    InversionConfig c;
    c.rho = rho;
    c.parameterization =
        spec.parameterization == "constant" ? ParameterizationKind::Constant : ParameterizationKind::Elementwise;
    c.bounds = bounds_from(spec.bounds);
    c.initial_field = LameField::constant(mesh, spec.initial[0], spec.initial[1], c.bounds);
    c.max_iterations = spec.max_iterations;
    c.gradient_tolerance = spec.gradient_tolerance;
    c.relative_gradient_tolerance = spec.relative_gradient_tolerance;
    c.initial_step = spec.initial_step;
    c.memory = spec.memory;
    c.sufficient_decrease = spec.sufficient_decrease;
    c.backtrack_factor = spec.backtrack_factor;
    c.project = spec.project;
    return c;
}

void write_field(const std::filesystem::path& path, const Mesh& mesh, const LameField& field) {
    if (field.size() != mesh.num_elements()) throw ParameterError("field does not match mesh");
    std::ostringstream os;
    os << "elastinv-field 1\nelements " << field.size() << '\n' << std::setprecision(17);
    for (int e = 0; e < field.size(); ++e) {
        const auto c = mesh.centroid(e);
        os << c.x() << ' ' << c.y() << ' ' << field.lambda()[e] << ' ' << field.mu()[e] << '\n';
    }
    write_text(path, os.str());
}

LameField read_field(const std::filesystem::path& path, LameBounds bounds) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open field file " + path.string());
    std::string magic, word;
    int version = 0;
    long n = -1;
    if (!(is >> magic >> version >> word >> n) || magic != "elastinv-field" || version != 1 || word != "elements" ||
        n < 0)
        throw ConfigError("bad field file header in " + path.string());
    Eigen::VectorXd l(n), m(n);
    for (long e = 0; e < n; ++e) {
        double cx, cy;
        if (!(is >> cx >> cy >> l[e] >> m[e])) throw ConfigError("truncated field file " + path.string());
    }
    return LameField(l, m, bounds);
}

double relative_l2_error(const Mesh& mesh, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double num = 0.0, den = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        num += mesh.area(e) * (a[e] - b[e]) * (a[e] - b[e]);
        den += mesh.area(e) * b[e] * b[e];
    }
    return std::sqrt(num / den);
}

std::array<Eigen::Vector2d, 2> top_fraction_centroids(const Mesh& mesh, const Eigen::VectorXd& values,
                                                      double fraction) {
    const int n = mesh.num_elements();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return values[a] > values[b]; });
    const int top = std::clamp(static_cast<int>(std::ceil(fraction * n)), 2, n);
    order.resize(top);

    std::array<Eigen::Vector2d, 2> centre{mesh.centroid(order[0]), mesh.centroid(order[0])};
    double far = -1.0;
    for (int e : order) {
        const double d = (mesh.centroid(e) - centre[0]).norm();
        if (d > far) far = d, centre[1] = mesh.centroid(e);
    }
    std::vector<int> label(top, -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int k = 0; k < top; ++k) {
            const auto p = mesh.centroid(order[k]);
            const int l = (p - centre[0]).norm() <= (p - centre[1]).norm() ? 0 : 1;
            changed |= l != label[k];
            label[k] = l;
        }
        std::array<Eigen::Vector2d, 2> sum{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
        std::array<double, 2> weight{0.0, 0.0};
        for (int k = 0; k < top; ++k) {
            sum[label[k]] += mesh.area(order[k]) * mesh.centroid(order[k]);
            weight[label[k]] += mesh.area(order[k]);
        }
        for (int c = 0; c < 2; ++c)
            if (weight[c] > 0.0) centre[c] = sum[c] / weight[c];
        if (!changed) break;
    }
    return centre;
}

double bump_matching_error(const std::array<Eigen::Vector2d, 2>& c, const std::array<Eigen::Vector2d, 2>& b) {
    const double straight = std::max((c[0] - b[0]).norm(), (c[1] - b[1]).norm());
    const double crossed = std::max((c[0] - b[1]).norm(), (c[1] - b[0]).norm());
    return std::min(straight, crossed);
}

ResultBundle run_example1(const ExperimentConfig& config) { return run_inversion_suite(config); }
ResultBundle run_example2(const ExperimentConfig& config) { return run_inversion_suite(config); }
ResultBundle run_example3(const ExperimentConfig& config) { return run_inversion_suite(config); }

ResultBundle run_property_campaigns(const ExperimentConfig& config) {
    if (config.kind == ExperimentKind::Monotonicity) return run_monotonicity(config);
    if (config.kind == ExperimentKind::Stability) return run_stability(config);
    throw ConfigError("property campaigns need kind monotonicity or stability");
}

ResultBundle run_forward(const ExperimentConfig& config) {
    namespace fs = std::filesystem;
    const fs::path out(config.output);
    const Mesh mesh = build_mesh(config.mesh);
    const LameField truth = build_truth(mesh, config.truth);
    {
        std::ostringstream os;
        write_mesh(os, mesh);
        write_text(out / "mesh.txt", os.str());
    }
    write_field(out / "truth_field.txt", mesh, truth);
    const ElasticSolver solver(mesh, truth);
    const SparseMatrix M = boundary_mass_matrix(mesh);

    ResultBundle bundle;
    json& doc = bundle.document;
    doc["kind"] = to_string(config.kind);
    doc["schema_version"] = kConfigSchemaVersion;
    doc["mesh"] = mesh_summary(mesh);
    doc["rows"] = json::array();
    const auto loads = build_loads(config);
    for (std::size_t k = 0; k < loads.size(); ++k) {
        const Eigen::VectorXd g = loads[k].nodal_values(mesh);
        const ForwardSolution u = solver.solve_neumann_nodal(g);
        std::ostringstream os;
        os << "node,x,y,ux,uy\n";
        for (int n = 0; n < mesh.num_nodes(); ++n)
            os << n << ',' << fmt17(mesh.nodes()[n].x()) << ',' << fmt17(mesh.nodes()[n].y()) << ','
               << fmt17(u.displacement[2 * n]) << ',' << fmt17(u.displacement[2 * n + 1]) << '\n';
        const std::string file = "displacement_" + std::to_string(k) + ".csv";
        write_text(out / file, os.str());
        doc["rows"].push_back({{"load", json::array({config.loads[k][0], config.loads[k][1]})},
                               {"boundary_work", (M * g).dot(u.trace_on_neumann)},
                               {"strain_energy", strain_energy(mesh, truth, u.strain)},
                               {"relative_residual", u.relative_residual},
                               {"displacement_file", file}});
    }
    doc["status"] = "complete";
    return bundle;
}

ResultBundle run_experiment(const ExperimentConfig& config) {
    namespace fs = std::filesystem;
    config.validate();
    const fs::path out(config.output);
    fs::create_directories(out);
    write_json(out / "config.json", to_json(config));
    try {
        ResultBundle bundle;
        switch (config.kind) {
        case ExperimentKind::Example1: bundle = run_example1(config); break;
        case ExperimentKind::Example2: bundle = run_example2(config); break;
        case ExperimentKind::Example3: bundle = run_example3(config); break;
        case ExperimentKind::Custom: bundle = run_inversion_suite(config); break;
        case ExperimentKind::Monotonicity:
        case ExperimentKind::Stability: bundle = run_property_campaigns(config); break;
        case ExperimentKind::Forward: bundle = run_forward(config); break;
        }
        // The output directory is left out so reruns elsewhere compare equal.
        bundle.document["config"] = to_json(config);
        bundle.document["config"].erase("output");
        write_json(out / "bundle.json", bundle.document);
        return bundle;
    } catch (const std::exception& e) {
        write_json(out / "bundle.json",
                   json{{"kind", to_string(config.kind)}, {"status", "partial"}, {"error", e.what()},
                        {"config", to_json(config)}});
        throw;
    }
}

} // namespace elastinv
