#pragma once

// JSON and CSV serialization for configs and results. Numbers are written with
// 12 significant digits everywhere so outputs are stable across runs.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "trapspec/constants.hpp"
#include "trapspec/error.hpp"
#include "trapspec/inversion.hpp"
#include "trapspec/noise_harness.hpp"
#include "trapspec/rabi_sim.hpp"
#include "trapspec/scattering_model.hpp"
#include "trapspec/trap_model.hpp"

namespace trapspec::io {

using json = nlohmann::ordered_json;

inline std::string fmt12(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

/// x rounded to 12 significant digits (what fmt12 prints).
inline double round12(double x) {
    if (!std::isfinite(x)) return x;
    return std::stod(fmt12(x));
}

/// Results are rounded to 12 significant digits; configs that go into a run
/// manifest keep full precision so a rerun sees exactly the same inputs.
enum class Precision { rounded, exact };

/// JSON number; non-finite values become null.
inline json num(double x, Precision p = Precision::rounded) {
    if (!std::isfinite(x)) return nullptr;
    return p == Precision::exact ? x : round12(x);
}

// --- reading helpers ---------------------------------------------------------------

inline json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(what + ": invalid JSON (" + e.what() + ")");
    }
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_json_text(ss.str(), path.string());
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(std::string("field '") + key + "' has the wrong type");
    }
}

template <class T>
T get_required(const json& j, const char* key, const std::string& ctx) {
    if (!j.is_object() || !j.contains(key)) throw InputError(ctx + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(ctx + ": field '" + key + "' has the wrong type");
    }
}

// --- models and configs ---------------------------------------------------------------

inline json to_json(const ResonanceModel& m, Precision p = Precision::rounded) {
    json terms = json::array();
    for (const auto& t : m.terms) terms.push_back({{"alpha_a0khz", num(t.alpha_a0khz, p)}, {"E_r_khz", num(t.E_r_khz, p)}});
    return {{"a_b_a0", num(m.a_b_a0, p)}, {"terms", terms}};
}

inline ResonanceModel model_from_json(const json& j) {
    if (j.is_string() && j.get<std::string>() == "null") return ResonanceModel::background(0.0);
    if (!j.is_object()) throw InputError("model: expected an object or \"null\"");
    ResonanceModel m;
    m.a_b_a0 = get_required<double>(j, "a_b_a0", "model");
    if (j.contains("terms")) {
        if (!j.at("terms").is_array()) throw InputError("model: 'terms' must be an array");
        for (const auto& t : j.at("terms"))
            m.terms.push_back({get_required<double>(t, "alpha_a0khz", "model term"), get_required<double>(t, "E_r_khz", "model term")});
    }
    m.validate();
    return m;
}

inline json to_json(const TrapConfig& t, Precision p = Precision::rounded) { return {{"nu_trap_hz", num(t.nu_trap_hz, p)}, {"mass_kg", num(t.mass_kg, p)}}; }

inline TrapConfig trap_from_json(const json& j) {
    TrapConfig t;
    if (j.is_null()) return t;
    if (!j.is_object()) throw InputError("trap: expected an object");
    t.nu_trap_hz = get_or<double>(j, "nu_trap_hz", t.nu_trap_hz);
    if (j.contains("nu_trap_khz")) t.nu_trap_hz = 1e3 * get_required<double>(j, "nu_trap_khz", "trap");
    if (j.contains("atom")) {
        const auto name = get_required<std::string>(j, "atom", "trap");
        const auto m = constants::atom_mass(name);
        if (!m) throw InputError("trap: unknown atom '" + name + "'");
        t.mass_kg = *m;
    }
    t.mass_kg = get_or<double>(j, "mass_kg", t.mass_kg);
    t.validate();
    return t;
}

inline json to_json(const MeasuredSpectrum& m, Precision p = Precision::rounded) {
    json d = json::array();
    for (double x : m.delta_E_khz) d.push_back(num(x, p));
    return {{"delta_E_khz", d}, {"sigma_hz", num(m.sigma_hz, p)}, {"trap", to_json(m.trap, p)}};
}

inline MeasuredSpectrum measurement_from_json(const json& j) {
    MeasuredSpectrum m;
    m.delta_E_khz = get_required<std::vector<double>>(j, "delta_E_khz", "measurement");
    m.sigma_hz = get_or<double>(j, "sigma_hz", 0.0);
    m.trap = trap_from_json(j.contains("trap") ? j.at("trap") : json());
    return m;
}

inline json to_json(const ChannelSet& s, Precision p = Precision::rounded) {
    json ch = json::array();
    for (const auto& c : s.channels) ch.push_back({{"F", c.F}, {"model", to_json(c.model, p)}, {"offset_khz", num(c.offset_khz, p)}});
    return {{"f_atom", s.f_atom}, {"channels", ch}};
}

inline ChannelSet channels_from_json(const json& j) {
    ChannelSet s;
    s.f_atom = get_required<int>(j, "f_atom", "channel set");
    if (!j.contains("channels") || !j.at("channels").is_array()) throw InputError("channel set: missing 'channels' array");
    for (const auto& c : j.at("channels")) {
        Channel ch;
        ch.F = get_required<int>(c, "F", "channel");
        if (!c.contains("model")) throw InputError("channel: missing field 'model'");
        ch.model = model_from_json(c.at("model"));
        ch.offset_khz = get_or<double>(c, "offset_khz", 0.0);
        s.channels.push_back(ch);
    }
    s.validate();
    return s;
}

inline json to_json(const ScanOptions& o, Precision p = Precision::rounded) {
    return {{"E0_lo_khz", num(o.E0_lo_khz, p)},
            {"E0_hi_khz", num(o.E0_hi_khz, p)},
            {"grid_step_khz", num(o.grid_step_khz, p)},
            {"threshold_a0sq", num(o.threshold_a0sq, p)},
            {"threshold_rel_l", num(o.threshold_rel_l, p)},
            {"refine_tol_khz", num(o.refine_tol_khz, p)},
            {"n_terms", o.n_terms},
            {"pole_lo_hw", num(o.pole_lo_hw, p)},
            {"pole_hi_hw", num(o.pole_hi_hw, p)},
            {"pole_step_khz", num(o.pole_step_khz, p)},
            {"pole_tol_khz", num(o.pole_tol_khz, p)},
            {"pole_exclusion_hw", num(o.pole_exclusion_hw, p)}};
}

inline ScanOptions scan_options_from_json(const json& j, ScanOptions o = {}) {
    if (j.is_null()) return o;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    o.E0_lo_khz = get_or<double>(j, "E0_lo_khz", nan);
    o.E0_hi_khz = get_or<double>(j, "E0_hi_khz", nan);
    o.grid_step_khz = get_or<double>(j, "grid_step_khz", o.grid_step_khz);
    o.threshold_a0sq = get_or<double>(j, "threshold_a0sq", nan);
    o.threshold_rel_l = get_or<double>(j, "threshold_rel_l", o.threshold_rel_l);
    o.refine_tol_khz = get_or<double>(j, "refine_tol_khz", o.refine_tol_khz);
    o.n_terms = get_or<int>(j, "n_terms", o.n_terms);
    o.pole_lo_hw = get_or<double>(j, "pole_lo_hw", o.pole_lo_hw);
    o.pole_hi_hw = get_or<double>(j, "pole_hi_hw", o.pole_hi_hw);
    o.pole_step_khz = get_or<double>(j, "pole_step_khz", o.pole_step_khz);
    o.pole_tol_khz = get_or<double>(j, "pole_tol_khz", o.pole_tol_khz);
    o.pole_exclusion_hw = get_or<double>(j, "pole_exclusion_hw", o.pole_exclusion_hw);
    if (o.n_terms != 1 && o.n_terms != 2) throw InputError("scan options: n_terms must be 1 or 2");
    return o;
}

inline json to_json(const NoiseSweepConfig& c, Precision p = Precision::rounded) {
    json u = json::array();
    for (double x : c.uncertainties_hz) u.push_back(num(x, p));
    return {{"mode", to_string(c.mode)},
            {"truth", to_json(c.truth, p)},
            {"trap", to_json(c.trap, p)},
            {"uncertainties_hz", u},
            {"n_sims", c.n_sims},
            {"seed", c.seed},
            {"n_lines", c.lines()},
            {"prior_fraction", num(c.prior_fraction, p)},
            {"n_grid", c.n_grid},
            {"scan", to_json(c.scan, p)}};
}

inline NoiseSweepConfig sweep_from_json(const json& j) {
    NoiseSweepConfig c;
    const auto mode = get_or<std::string>(j, "mode", "raman");
    if (mode == "raman")
        c.mode = SweepMode::raman;
    else if (mode == "rabi")
        c.mode = SweepMode::rabi;
    else
        throw InputError("sweep config: mode must be 'raman' or 'rabi'");
    if (j.contains("truth"))
        c.truth = model_from_json(j.at("truth"));
    else if (c.mode == SweepMode::raman)
        c.truth = ResonanceModel::single(36.0, -2.049e5, 84.72);
    else
        c.truth = ChannelSet::cesium_f3().channels.front().model;
    c.trap = trap_from_json(j.contains("trap") ? j.at("trap") : json());
    c.uncertainties_hz = get_required<std::vector<double>>(j, "uncertainties_hz", "sweep config");
    c.n_sims = get_or<int>(j, "n_sims", c.n_sims);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.n_lines = get_or<int>(j, "n_lines", c.n_lines);
    c.prior_fraction = get_or<double>(j, "prior_fraction", c.prior_fraction);
    c.n_grid = get_or<int>(j, "n_grid", c.n_grid);
    c.scan = scan_options_from_json(j.contains("scan") ? j.at("scan") : json());
    c.validate();
    return c;
}

// --- writing -------------------------------------------------------------------------------

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path), path_(path) {
        if (!out_) throw InputError("cannot write " + path.string());
        for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
        out_ << '\n';
    }

    CsvWriter& row(std::initializer_list<double> values) {
        bool first = true;
        for (double v : values) {
            out_ << (first ? "" : ",") << fmt12(v);
            first = false;
        }
        out_ << '\n';
        return *this;
    }

    /// Mixed row: pre-formatted cells.
    CsvWriter& cells(const std::vector<std::string>& values) {
        for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
        out_ << '\n';
        return *this;
    }

    ~CsvWriter() { out_.flush(); }

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace trapspec::io
