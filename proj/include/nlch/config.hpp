#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlch/forward.hpp"
#include "nlch/inverse.hpp"
#include "nlch/io.hpp"

namespace nlch {

/// Recipe for an initial, truth or starting field.
struct FieldSource {
    enum class Kind { constant, tanh_disk, gaussian_bump, file };
    Kind kind = Kind::constant;
    double value = 0.0;      // constant
    double amplitude = 0.8;  // tanh_disk, gaussian_bump
    double radius = 0.25;    // tanh_disk
    double width = 0.1;      // tanh_disk interface width, gaussian_bump std deviation
    double cx = 0.5, cy = 0.5;  // centre, as fractions of lx, ly
    std::filesystem::path path;  // file, resolved against the config directory

    static FieldSource constant(double v) {
        FieldSource s;
        s.kind = Kind::constant;
        s.value = v;
        return s;
    }
    static FieldSource tanh_disk(double amp, double r, double w) {
        FieldSource s;
        s.kind = Kind::tanh_disk;
        s.amplitude = amp;
        s.radius = r;
        s.width = w;
        return s;
    }
    static FieldSource gaussian_bump(double amp, double w) {
        FieldSource s;
        s.kind = Kind::gaussian_bump;
        s.amplitude = amp;
        s.width = w;
        return s;
    }
};

inline std::string to_string(FieldSource::Kind k) {
    switch (k) {
        case FieldSource::Kind::constant: return "constant";
        case FieldSource::Kind::tanh_disk: return "tanh_disk";
        case FieldSource::Kind::gaussian_bump: return "gaussian_bump";
        case FieldSource::Kind::file: return "file";
    }
    return "unknown";
}

/// tanh_disk: amplitude * tanh((radius - |x - c|) / width).
/// gaussian_bump: amplitude * exp(-|x - c|^2 / (2 width^2)).
inline ScalarField make_field(const FieldSource& src, const GridSpec& g) {
    const double cx = src.cx * g.lx, cy = src.cy * g.ly;
    switch (src.kind) {
        case FieldSource::Kind::constant: return ScalarField(g, src.value);
        case FieldSource::Kind::tanh_disk:
            return ScalarField::from_function(g, [&](double x, double y) {
                return src.amplitude * std::tanh((src.radius - std::hypot(x - cx, y - cy)) / src.width);
            });
        case FieldSource::Kind::gaussian_bump:
            return ScalarField::from_function(g, [&](double x, double y) {
                const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                return src.amplitude * std::exp(-r2 / (2.0 * src.width * src.width));
            });
        case FieldSource::Kind::file: return read_field(src.path, g);
    }
    throw ConfigError("field source: unknown kind");
}

struct InverseConfig {
    InverseProblemSpec spec;  // phi_omega / sigma0 are filled at run time
    FieldSource truth = FieldSource::gaussian_bump(0.6, 0.15);
    FieldSource start = FieldSource::constant(0.0);
    std::optional<std::filesystem::path> measurement;
};

struct RunConfig {
    GridSpec grid;
    KernelSpec kernel = KernelSpec::gaussian(0.1);
    SingularCellRule singular_cell_rule = SingularCellRule::exact_cell_average;
    ConstitutiveSet laws;
    MaterialParams params;
    StepperConfig stepper;
    /// 0 means unlimited; otherwise the checkpoint stride is raised so the
    /// stored trajectory fits.
    double memory_budget_mb = 0.0;
    FieldSource phi0 = FieldSource::tanh_disk(0.8, 0.25, 0.1);
    FieldSource sigma0 = FieldSource::constant(1.0);
    InverseConfig inverse;
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "out";
    std::filesystem::path source_path;  // the config file itself, if any

    std::shared_ptr<const Model> make_model() const {
        return std::make_shared<const Model>(grid, kernel, singular_cell_rule, laws, params, stepper);
    }
    State initial_state() const { return {0.0, make_field(phi0, grid), make_field(sigma0, grid)}; }
};

/// Smallest stride whose checkpoints (plus one recomputed segment) fit in budget.
inline int checkpoint_stride_for_budget(const GridSpec& g, int steps, double budget_mb) {
    if (!(budget_mb > 0.0)) return 1;
    const double state_bytes = 2.0 * 8.0 * static_cast<double>(g.size());
    const double budget = budget_mb * 1024.0 * 1024.0;
    const double levels = steps + 1.0;
    for (int s = 1; s <= steps + 1; ++s) {
        const double stored = std::ceil(levels / s) + s;
        if (stored * state_bytes <= budget) return s;
    }
    return std::max(1, steps + 1);
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

using nlohmann::json;

/// Walks a JSON object, collecting every problem with its key path.
class ConfigReader {
public:
    explicit ConfigReader(std::vector<std::string>& errs) : errs_(errs) {}

    /// Returns the member object at key (or null if absent); flags non-objects.
    const json* object(const json& parent, const std::string& key, const std::string& path) {
        auto it = parent.find(key);
        if (it == parent.end() || it->is_null()) return nullptr;
        if (!it->is_object()) {
            errs_.push_back(path + ": expected an object");
            return nullptr;
        }
        return &*it;
    }

    void number(const json* obj, const std::string& key, const std::string& path, double& out) {
        if (!obj) return;
        auto it = obj->find(key);
        if (it == obj->end() || it->is_null()) return;
        if (!it->is_number()) {
            errs_.push_back(path + ": expected a number");
            return;
        }
        out = it->get<double>();
    }

    void integer(const json* obj, const std::string& key, const std::string& path, int& out) {
        if (!obj) return;
        auto it = obj->find(key);
        if (it == obj->end() || it->is_null()) return;
        if (!it->is_number_integer()) {
            errs_.push_back(path + ": expected an integer");
            return;
        }
        const auto v = it->get<long long>();
        if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
            errs_.push_back(path + ": integer out of range");
            return;
        }
        out = static_cast<int>(v);
    }

    void boolean(const json* obj, const std::string& key, const std::string& path, bool& out) {
        if (!obj) return;
        auto it = obj->find(key);
        if (it == obj->end() || it->is_null()) return;
        if (!it->is_boolean()) {
            errs_.push_back(path + ": expected true or false");
            return;
        }
        out = it->get<bool>();
    }

    bool string(const json* obj, const std::string& key, const std::string& path, std::string& out) {
        if (!obj) return false;
        auto it = obj->find(key);
        if (it == obj->end() || it->is_null()) return false;
        if (!it->is_string()) {
            errs_.push_back(path + ": expected a string");
            return false;
        }
        out = it->get<std::string>();
        return true;
    }

    void known_keys(const json* obj, const std::string& path, std::initializer_list<const char*> keys) {
        if (!obj) return;
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = obj->begin(); it != obj->end(); ++it)
            if (!ok.count(it.key())) errs_.push_back((path.empty() ? "" : path + ".") + it.key() + ": unknown key");
    }

    void add(std::string e) { errs_.push_back(std::move(e)); }

private:
    std::vector<std::string>& errs_;
};

inline std::string join_path(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

inline void read_field_source(ConfigReader& r, const json& parent, const std::string& key, const std::string& prefix,
                              const std::filesystem::path& base_dir, FieldSource& out) {
    const std::string path = join_path(prefix, key);
    const json* o = r.object(parent, key, path);
    if (!o) return;
    r.known_keys(o, path, {"type", "value", "amplitude", "radius", "width", "cx", "cy", "path"});
    std::string type;
    if (r.string(o, "type", path + ".type", type)) {
        if (type == "constant") out.kind = FieldSource::Kind::constant;
        else if (type == "tanh_disk") out.kind = FieldSource::Kind::tanh_disk;
        else if (type == "gaussian_bump") out.kind = FieldSource::Kind::gaussian_bump;
        else if (type == "file") out.kind = FieldSource::Kind::file;
        else {
            r.add(path + ".type: unknown field type '" + type + "' (supported: constant, tanh_disk, gaussian_bump, file)");
            return;
        }
    }
    r.number(o, "value", path + ".value", out.value);
    r.number(o, "amplitude", path + ".amplitude", out.amplitude);
    r.number(o, "radius", path + ".radius", out.radius);
    r.number(o, "width", path + ".width", out.width);
    r.number(o, "cx", path + ".cx", out.cx);
    r.number(o, "cy", path + ".cy", out.cy);
    std::string p;
    if (r.string(o, "path", path + ".path", p)) {
        std::filesystem::path fp(p);
        out.path = fp.is_absolute() ? fp : base_dir / fp;
    }
    if (out.kind == FieldSource::Kind::file) {
        if (out.path.empty()) r.add(path + ".path: required for type 'file'");
        else if (!std::filesystem::exists(out.path)) r.add(path + ".path: file does not exist: " + out.path.string());
    }
    if (out.kind == FieldSource::Kind::tanh_disk || out.kind == FieldSource::Kind::gaussian_bump) {
        if (!(out.width > 0.0)) r.add(path + ".width: must be > 0");
    }
}

inline json field_source_json(const FieldSource& s) {
    json j{{"type", to_string(s.kind)}};
    switch (s.kind) {
        case FieldSource::Kind::constant: j["value"] = s.value; break;
        case FieldSource::Kind::tanh_disk:
            j.update({{"amplitude", s.amplitude}, {"radius", s.radius}, {"width", s.width}, {"cx", s.cx}, {"cy", s.cy}});
            break;
        case FieldSource::Kind::gaussian_bump:
            j.update({{"amplitude", s.amplitude}, {"width", s.width}, {"cx", s.cx}, {"cy", s.cy}});
            break;
        case FieldSource::Kind::file: j["path"] = s.path.string(); break;
    }
    return j;
}

template <class Fn>
void collect(std::vector<std::string>& errs, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        errs.insert(errs.end(), e.problems().begin(), e.problems().end());
    }
}

}  // namespace detail

/// Parses and validates a JSON run configuration. Every key is optional and
/// defaults to the values in RunConfig. Relative paths are resolved against
/// `base_dir`. Throws ConfigError listing all problems found.
inline RunConfig parse_config_json(const nlohmann::json& root, const std::filesystem::path& base_dir) {
    using detail::json;
    std::vector<std::string> errs;
    detail::ConfigReader r(errs);
    RunConfig c;
    if (!root.is_object()) throw ConfigError("<root>: expected a JSON object");
    r.known_keys(&root, "", {"grid", "kernel", "constitutive", "stepper", "initial", "inverse", "seed", "output_dir"});

    if (const json* g = r.object(root, "grid", "grid")) {
        r.known_keys(g, "grid", {"nx", "ny", "lx", "ly"});
        r.integer(g, "nx", "grid.nx", c.grid.nx);
        r.integer(g, "ny", "grid.ny", c.grid.ny);
        r.number(g, "lx", "grid.lx", c.grid.lx);
        r.number(g, "ly", "grid.ly", c.grid.ly);
    }
    detail::collect(errs, [&] { c.grid.validate(); });

    if (const json* k = r.object(root, "kernel", "kernel")) {
        r.known_keys(k, "kernel", {"family", "width", "radius", "exponent", "singular_cell_rule"});
        std::string fam;
        if (r.string(k, "family", "kernel.family", fam)) {
            if (fam == "gaussian") c.kernel.family = KernelFamily::gaussian;
            else if (fam == "newtonian2d") c.kernel.family = KernelFamily::newtonian2d;
            else if (fam == "mollified_compact") c.kernel.family = KernelFamily::mollified_compact;
            else r.add("kernel.family: unknown kernel family '" + fam +
                       "' (supported: gaussian, newtonian2d, mollified_compact)");
        }
        r.number(k, "width", "kernel.width", c.kernel.width);
        r.number(k, "radius", "kernel.radius", c.kernel.radius);
        r.integer(k, "exponent", "kernel.exponent", c.kernel.exponent);
        std::string rule;
        if (r.string(k, "singular_cell_rule", "kernel.singular_cell_rule", rule)) {
            if (rule == "none") c.singular_cell_rule = SingularCellRule::none;
            else if (rule == "exact_cell_average") c.singular_cell_rule = SingularCellRule::exact_cell_average;
            else r.add("kernel.singular_cell_rule: unknown rule '" + rule + "' (supported: none, exact_cell_average)");
        }
    }
    detail::collect(errs, [&] { c.kernel.validate(); });
    if (c.kernel.is_singular() && c.singular_cell_rule == SingularCellRule::none)
        errs.push_back("kernel.singular_cell_rule: a singular kernel needs a singular-cell rule");

    if (const json* k = r.object(root, "constitutive", "constitutive")) {
        r.known_keys(k, "constitutive", {"A", "B", "d0", "d1", "n0", "n1", "P0", "prolif_exponent"});
        r.number(k, "A", "constitutive.A", c.params.A);
        r.number(k, "B", "constitutive.B", c.params.B);
        r.number(k, "d0", "constitutive.d0", c.laws.d0);
        r.number(k, "d1", "constitutive.d1", c.laws.d1);
        r.number(k, "n0", "constitutive.n0", c.laws.n0);
        r.number(k, "n1", "constitutive.n1", c.laws.n1);
        r.number(k, "P0", "constitutive.P0", c.laws.P0);
        r.integer(k, "prolif_exponent", "constitutive.prolif_exponent", c.laws.prolif_exponent);
    }
    detail::collect(errs, [&] { c.params.validate(); });
    detail::collect(errs, [&] { c.laws.validate(); });

    if (const json* s = r.object(root, "stepper", "stepper")) {
        r.known_keys(s, "stepper", {"tau", "T", "epsilon", "newton_tol", "newton_max_iter", "linear_tol", "bound_tol",
                                    "full_jacobian", "checkpoint_stride", "memory_budget_mb"});
        r.number(s, "tau", "stepper.tau", c.stepper.tau);
        r.number(s, "T", "stepper.T", c.stepper.T);
        r.number(s, "epsilon", "stepper.epsilon", c.stepper.epsilon);
        r.number(s, "newton_tol", "stepper.newton_tol", c.stepper.newton_tol);
        r.integer(s, "newton_max_iter", "stepper.newton_max_iter", c.stepper.newton_max_iter);
        r.number(s, "linear_tol", "stepper.linear_tol", c.stepper.linear_tol);
        r.number(s, "bound_tol", "stepper.bound_tol", c.stepper.bound_tol);
        r.boolean(s, "full_jacobian", "stepper.full_jacobian", c.stepper.full_jacobian);
        r.integer(s, "checkpoint_stride", "stepper.checkpoint_stride", c.stepper.checkpoint_stride);
        r.number(s, "memory_budget_mb", "stepper.memory_budget_mb", c.memory_budget_mb);
        if (!(c.memory_budget_mb >= 0.0)) r.add("stepper.memory_budget_mb: must be >= 0");
    }
    {
        const std::size_t before = errs.size();
        detail::collect(errs, [&] { c.stepper.validate(); });
        if (errs.size() == before && c.memory_budget_mb > 0.0)
            c.stepper.checkpoint_stride = std::max(
                c.stepper.checkpoint_stride, checkpoint_stride_for_budget(c.grid, c.stepper.steps(), c.memory_budget_mb));
    }

    if (const json* i = r.object(root, "initial", "initial")) {
        r.known_keys(i, "initial", {"phi", "sigma"});
        detail::read_field_source(r, *i, "phi", "initial", base_dir, c.phi0);
        detail::read_field_source(r, *i, "sigma", "initial", base_dir, c.sigma0);
    }

    if (const json* v = r.object(root, "inverse", "inverse")) {
        r.known_keys(v, "inverse", {"alpha", "kappa", "feas_margin", "max_iter", "max_backtracks", "opt_tol",
                                    "armijo_c", "sobolev_gradient", "random_probes", "alpha_start", "alpha_factor",
                                    "schedule_length", "delta", "c_dp", "ratio_cap", "truth", "start", "measurement"});
        auto& s = c.inverse.spec;
        r.number(v, "alpha", "inverse.alpha", s.alpha);
        r.number(v, "kappa", "inverse.kappa", s.kappa);
        r.number(v, "feas_margin", "inverse.feas_margin", s.feas_margin);
        r.integer(v, "max_iter", "inverse.max_iter", s.max_iter);
        r.integer(v, "max_backtracks", "inverse.max_backtracks", s.max_backtracks);
        r.number(v, "opt_tol", "inverse.opt_tol", s.opt_tol);
        r.number(v, "armijo_c", "inverse.armijo_c", s.armijo_c);
        r.boolean(v, "sobolev_gradient", "inverse.sobolev_gradient", s.sobolev_gradient);
        r.integer(v, "random_probes", "inverse.random_probes", s.random_probes);
        r.number(v, "alpha_start", "inverse.alpha_start", s.alpha_start);
        r.number(v, "alpha_factor", "inverse.alpha_factor", s.alpha_factor);
        r.integer(v, "schedule_length", "inverse.schedule_length", s.schedule_length);
        r.number(v, "delta", "inverse.delta", s.delta);
        r.number(v, "c_dp", "inverse.c_dp", s.c_dp);
        r.number(v, "ratio_cap", "inverse.ratio_cap", s.ratio_cap);
        detail::read_field_source(r, *v, "truth", "inverse", base_dir, c.inverse.truth);
        detail::read_field_source(r, *v, "start", "inverse", base_dir, c.inverse.start);
        std::string m;
        if (r.string(v, "measurement", "inverse.measurement", m)) {
            std::filesystem::path mp(m);
            c.inverse.measurement = mp.is_absolute() ? mp : base_dir / mp;
            if (!std::filesystem::exists(*c.inverse.measurement))
                r.add("inverse.measurement: file does not exist: " + c.inverse.measurement->string());
        }
    }
    detail::collect(errs, [&] { c.inverse.spec.validate(); });

    if (auto it = root.find("seed"); it != root.end() && !it->is_null()) {
        if (it->is_number_unsigned()) c.seed = it->get<std::uint64_t>();
        else if (it->is_number_integer() && it->get<long long>() >= 0) c.seed = static_cast<std::uint64_t>(it->get<long long>());
        else errs.push_back("seed: expected a non-negative integer");
    }
    c.inverse.spec.seed = c.seed;
    std::string out;
    if (r.string(&root, "output_dir", "output_dir", out)) {
        std::filesystem::path op(out);
        c.output_dir = op.is_absolute() ? op : base_dir / op;
    } else {
        c.output_dir = base_dir / c.output_dir;
    }

    if (!errs.empty()) throw ConfigError(errs);
    return c;
}

inline RunConfig parse_config_string(const std::string& text, const std::filesystem::path& base_dir = ".") {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("<root>: malformed JSON: ") + e.what());
    }
    return parse_config_json(root, base_dir);
}

inline RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("<file>: cannot read config file " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    RunConfig c = parse_config_string(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
    c.source_path = path;
    return c;
}

/// Every setting, defaults materialised.
inline nlohmann::json resolved_config_json(const RunConfig& c) {
    using nlohmann::json;
    const auto& s = c.inverse.spec;
    json inv{{"alpha", s.alpha},
             {"feas_margin", s.feas_margin},
             {"max_iter", s.max_iter},
             {"max_backtracks", s.max_backtracks},
             {"opt_tol", s.opt_tol},
             {"armijo_c", s.armijo_c},
             {"sobolev_gradient", s.sobolev_gradient},
             {"random_probes", s.random_probes},
             {"alpha_start", s.alpha_start},
             {"alpha_factor", s.alpha_factor},
             {"schedule_length", s.schedule_length},
             {"delta", s.delta},
             {"c_dp", s.c_dp},
             {"ratio_cap", s.ratio_cap},
             {"truth", detail::field_source_json(c.inverse.truth)},
             {"start", detail::field_source_json(c.inverse.start)}};
    // JSON has no infinity; an absent kappa means no entropy cap.
    if (std::isfinite(s.kappa)) inv["kappa"] = s.kappa;
    if (c.inverse.measurement) inv["measurement"] = c.inverse.measurement->string();
    return json{
        {"grid", {{"nx", c.grid.nx}, {"ny", c.grid.ny}, {"lx", c.grid.lx}, {"ly", c.grid.ly}}},
        {"kernel",
         {{"family", to_string(c.kernel.family)},
          {"width", c.kernel.width},
          {"radius", c.kernel.radius},
          {"exponent", c.kernel.exponent},
          {"singular_cell_rule", c.singular_cell_rule == SingularCellRule::none ? "none" : "exact_cell_average"}}},
        {"constitutive",
         {{"A", c.params.A},
          {"B", c.params.B},
          {"d0", c.laws.d0},
          {"d1", c.laws.d1},
          {"n0", c.laws.n0},
          {"n1", c.laws.n1},
          {"P0", c.laws.P0},
          {"prolif_exponent", c.laws.prolif_exponent}}},
        {"stepper",
         {{"tau", c.stepper.tau},
          {"T", c.stepper.T},
          {"epsilon", c.stepper.epsilon},
          {"newton_tol", c.stepper.newton_tol},
          {"newton_max_iter", c.stepper.newton_max_iter},
          {"linear_tol", c.stepper.linear_tol},
          {"bound_tol", c.stepper.bound_tol},
          {"full_jacobian", c.stepper.full_jacobian},
          {"checkpoint_stride", c.stepper.checkpoint_stride},
          {"memory_budget_mb", c.memory_budget_mb}}},
        {"initial", {{"phi", detail::field_source_json(c.phi0)}, {"sigma", detail::field_source_json(c.sigma0)}}},
        {"inverse", inv},
        {"seed", c.seed},
        {"output_dir", c.output_dir.string()}};
}

inline void write_resolved_config(const std::filesystem::path& path, const RunConfig& c) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << resolved_config_json(c).dump(2) << '\n';
}

/// Exclusive ownership of an output directory for the lifetime of the object.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& dir) : path_(dir / ".nlch.lock") {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) throw IoError("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
        std::fclose(f);
    }
    ~OutputLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// twin data

struct TwinData {
    ScalarField truth;
    ScalarField clean;     // S(truth)
    ScalarField measured;  // clean + noise with ||noise|| = delta
};

/// Synthetic measurement from a ground truth: forward solve, then Gaussian
/// noise rescaled to L2 norm exactly delta (seeded).
inline TwinData make_twin(std::shared_ptr<const Model> model, const ScalarField& truth, const ScalarField& sigma0,
                          double delta, std::uint64_t seed) {
    ForwardResult fwd = run_forward(model, State{0.0, truth, sigma0});
    TwinData t{truth, fwd.trajectory.final_state().phi, {}};
    t.measured = t.clean;
    if (delta > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        ScalarField noise(truth.grid());
        for (std::size_t k = 0; k < noise.size(); ++k) noise[k] = nd(rng);
        noise *= delta / norm_l2(noise);
        t.measured += noise;
    }
    return t;
}

}  // namespace nlch
