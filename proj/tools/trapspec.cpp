// trapspec: forward solve, inversion, Rabi simulation and noise sweeps.
//
// Every subcommand resolves its configuration as defaults < --config JSON <
// command-line flags, runs from the resolved config only, and writes it into
// manifest.json next to the outputs. Passing that manifest back as --config
// reproduces the outputs byte for byte.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trapspec.hpp"

namespace fs = std::filesystem;
using namespace trapspec;
using io::json;
using io::Precision;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string out = ".";
    bool quiet = false;
};

struct RunContext {
    std::string command;
    json config;
    std::uint64_t seed = 1;
    int threads = 1;
    fs::path out;
    bool quiet = false;
    std::vector<std::string> outputs;

    fs::path file(const std::string& name) {
        outputs.push_back(name);
        return out / name;
    }

    void write_manifest() {
        json m;
        m["command"] = command;
        m["config"] = config;
        m["seed"] = seed;
        m["tool_version"] = trapspec::version;
        m["outputs"] = outputs;
        io::write_json_file(out / "manifest.json", m);
    }

    void say(const std::string& s) const {
        if (!quiet) std::cout << s << '\n';
    }
};

/// Loads a config file; a run manifest is accepted in place of a plain config.
json load_config(const std::string& path, const std::string& command, std::optional<std::uint64_t>& seed) {
    if (path.empty()) return json::object();
    json j = io::read_json_file(path);
    if (j.is_object() && j.contains("command") && j.contains("config")) {
        if (j.at("command") != command)
            throw InputError("manifest " + path + " was written by '" + j.at("command").get<std::string>() + "'");
        if (!seed && j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
        return j.at("config");
    }
    if (!j.is_object()) throw InputError(path + ": config must be a JSON object");
    return j;
}

json load_json_arg(const std::string& arg) {
    if (arg == "null") return "null";
    return io::read_json_file(arg);
}

RunContext make_context(const std::string& command, const Globals& g, json config, std::uint64_t seed) {
    RunContext ctx;
    ctx.command = command;
    ctx.config = std::move(config);
    ctx.seed = seed;
    ctx.threads = resolve_threads(g.threads);
    ctx.out = g.out;
    ctx.quiet = g.quiet;
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw InputError("cannot create output directory " + g.out + ": " + ec.message());
    return ctx;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw InputError("not a number: '" + item + "'");
        }
    }
    return out;
}

TrapConfig apply_trap_flags(json& cfg, std::optional<double> trap_khz, const std::string& atom) {
    json t = cfg.contains("trap") ? cfg["trap"] : json::object();
    if (trap_khz) {
        t.erase("nu_trap_khz");
        t["nu_trap_hz"] = *trap_khz * 1e3;
    }
    if (!atom.empty()) {
        t.erase("mass_kg");
        t["atom"] = atom;
    }
    return io::trap_from_json(t);
}

// --- forward ------------------------------------------------------------------------

struct ForwardArgs {
    std::string config, model;
    std::optional<double> trap_khz;
    std::string atom;
    std::optional<int> levels;
};

int cmd_forward(const ForwardArgs& a, Globals g) {
    json cfg = load_config(a.config, "forward", g.seed);
    // A bare model file is accepted as the config.
    if (cfg.contains("a_b_a0")) cfg = json{{"model", cfg}};
    if (!a.model.empty()) cfg["model"] = load_json_arg(a.model);
    if (!cfg.contains("model")) throw InputError("forward: no model given (use --model <file> or --model null)");
    const ResonanceModel model = io::model_from_json(cfg["model"]);
    const TrapConfig trap = apply_trap_flags(cfg, a.trap_khz, a.atom);
    const int levels = a.levels ? *a.levels : io::get_or<int>(cfg, "levels", 5);
    if (levels < 1) throw InputError("forward: levels must be >= 1");

    json resolved{{"model", io::to_json(model, Precision::exact)}, {"trap", io::to_json(trap, Precision::exact)}, {"levels", levels}};
    auto ctx = make_context("forward", g, resolved, g.seed.value_or(1));

    const auto spec = solve_trap_levels(model, trap, levels);
    {
        io::CsvWriter w(ctx.file("levels.csv"), {"n", "E_hbar_omega", "E_over_h_khz", "interval_index"});
        for (std::size_t i = 0; i < spec.size(); ++i)
            w.row({double(spec.levels[i].n), spec.levels[i].E, spec.energy_khz(i), double(spec.levels[i].interval_index)});
    }
    {
        io::CsvWriter w(ctx.file("transitions.csv"), {"from", "to", "delta_hbar_omega", "delta_khz"});
        for (const auto& t : transition_energies(spec, 0)) w.row({double(t.from), double(t.to), t.delta_hw, t.delta_khz});
    }
    ctx.write_manifest();
    for (std::size_t i = 0; i < spec.size(); ++i)
        ctx.say("E_" + std::to_string(i) + " = " + io::fmt12(spec.energy(i)) + " hbar*omega = " +
                io::fmt12(spec.energy_khz(i)) + " kHz");
    return 0;
}

// --- invert -------------------------------------------------------------------------

struct InvertArgs {
    std::string config, measurement, window, prior;
    std::optional<double> grid_step;
    std::optional<int> n_terms, curve_points;
};

json minimum_json(const ScanMinimum& m, const FitResult& r) {
    return {{"E0_khz", io::num(m.E0_khz)},
            {"chi2_a0sq", io::num(m.chi2)},
            {"threshold_a0sq", io::num(m.threshold)},
            {"E_max_khz", io::num(m.E0_khz + r.measurement.delta_E_khz.back())},
            {"model", io::to_json(m.model)}};
}

int cmd_invert(const InvertArgs& a, Globals g) {
    json cfg = load_config(a.config, "invert", g.seed);
    if (cfg.contains("delta_E_khz")) cfg = json{{"measurement", cfg}};
    if (!a.measurement.empty()) cfg["measurement"] = io::read_json_file(a.measurement);
    if (!cfg.contains("measurement")) throw InputError("invert: no measurement given (use --measurement <file>)");
    const MeasuredSpectrum meas = io::measurement_from_json(cfg["measurement"]);

    ScanOptions opt = io::scan_options_from_json(cfg.contains("scan") ? cfg["scan"] : json());
    if (a.grid_step) opt.grid_step_khz = *a.grid_step;
    if (a.n_terms) opt.n_terms = *a.n_terms;
    if (!a.window.empty()) {
        const auto w = parse_list(a.window);
        if (w.size() != 2) throw InputError("invert: --window expects lo,hi in kHz");
        opt.E0_lo_khz = w[0];
        opt.E0_hi_khz = w[1];
    }
    const auto [dlo, dhi] = default_E0_window(meas.trap);
    if (std::isnan(opt.E0_lo_khz)) opt.E0_lo_khz = dlo;
    if (std::isnan(opt.E0_hi_khz)) opt.E0_hi_khz = dhi;

    std::optional<LengthPrior> prior;
    if (cfg.contains("prior") && !cfg["prior"].is_null()) {
        const auto& p = cfg["prior"];
        prior = LengthPrior{io::get_required<double>(p, "E_khz", "prior"), io::get_required<double>(p, "a_lo_a0", "prior"),
                            io::get_required<double>(p, "a_hi_a0", "prior")};
    }
    if (!a.prior.empty()) {
        const auto p = parse_list(a.prior);
        if (p.size() != 3) throw InputError("invert: --prior expects E_khz,a_lo_a0,a_hi_a0");
        prior = LengthPrior{p[0], p[1], p[2]};
    }
    if (prior && !(prior->a_hi_a0 >= prior->a_lo_a0)) throw InputError("invert: prior interval is empty");
    const int curve_points = a.curve_points ? *a.curve_points : io::get_or<int>(cfg, "curve_points", 200);
    if (curve_points < 2) throw InputError("invert: curve_points must be >= 2");

    json resolved{{"measurement", io::to_json(meas, Precision::exact)},
                  {"scan", io::to_json(opt, Precision::exact)},
                  {"prior", prior ? json{{"E_khz", prior->E_khz}, {"a_lo_a0", prior->a_lo_a0}, {"a_hi_a0", prior->a_hi_a0}}
                                  : json(nullptr)},
                  {"curve_points", curve_points}};
    auto ctx = make_context("invert", g, resolved, g.seed.value_or(1));
    opt.threads = ctx.threads;

    const FitResult res = chi2_scan(meas, opt);
    {
        io::CsvWriter w(ctx.file("scan.csv"), {"E0_khz", "chi2_a0sq", "valid"});
        for (const auto& p : res.scan) w.row({p.E0_khz, p.valid ? p.chi2 : std::numeric_limits<double>::quiet_NaN(), p.valid ? 1.0 : 0.0});
    }
    json minima = json::array();
    for (const auto& m : res.minima) minima.push_back(minimum_json(m, res));
    io::write_json_file(ctx.file("minima.json"), {{"minima", minima}, {"warnings", res.warnings}});

    if (res.minima.empty()) {
        ctx.write_manifest();
        throw NoFitError("invert: no chi2 minimum below the near-zero threshold (scan written)");
    }

    // Candidates: the prior filter when a prior is given, otherwise every minimum.
    std::vector<std::size_t> candidates;
    if (prior) {
        try {
            candidates = disambiguate(res, *prior).candidates;
        } catch (const NoFitError&) {
            ctx.write_manifest();
            throw;
        }
    } else {
        for (std::size_t i = 0; i < res.minima.size(); ++i) candidates.push_back(i);
    }

    auto write_curve = [&](std::size_t idx, const std::string& name) {
        const auto& m = res.minima[idx];
        const auto pts = extract_length_curve(res, idx, m.E0_khz, m.E0_khz + meas.delta_E_khz.back(), curve_points);
        io::CsvWriter w(ctx.file(name), {"E_khz", "a_a0"});
        for (const auto& p : pts) w.row({p.E_khz, p.a_a0});
    };

    json sel;
    sel["tied"] = candidates.size() > 1;
    if (candidates.size() == 1) {
        const std::size_t i = candidates.front();
        sel["selected_index"] = i;
        sel["selected"] = minimum_json(res.minima[i], res);
        write_curve(i, "curve.csv");
        ctx.say("selected E0 = " + io::fmt12(res.minima[i].E0_khz) + " kHz");
    } else {
        sel["selected_index"] = nullptr;
        sel["selected"] = nullptr;
        json cands = json::array();
        for (std::size_t i : candidates) {
            const std::string name = "curve_" + std::to_string(i) + ".csv";
            json c = minimum_json(res.minima[i], res);
            c["index"] = i;
            c["curve"] = name;
            cands.push_back(c);
            write_curve(i, name);
        }
        sel["candidates"] = cands;
        ctx.say(std::to_string(candidates.size()) + " minima remain; supply --prior to choose one");
    }
    io::write_json_file(ctx.file("selected_model.json"), sel);
    ctx.write_manifest();
    for (const auto& m : res.minima) ctx.say("minimum at E0 = " + io::fmt12(m.E0_khz) + " kHz, chi2 = " + io::fmt12(m.chi2));
    return 0;
}

// --- rabi ---------------------------------------------------------------------------

struct RabiArgs {
    std::string config, channels, init, atom;
    std::optional<double> squeeze, T_total, dt, jitter, trap_khz, tolerance_hz;
    std::optional<int> shots, levels;
};

json ket_json(const AngularMomentumKet& k) { return json::array({k.f1, k.m1, k.f2, k.m2}); }

AngularMomentumKet ket_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 4) throw InputError(std::string(what) + ": expected [f1, m1, f2, m2]");
    AngularMomentumKet k{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
    if (!k.valid()) throw InputError(std::string(what) + ": invalid angular momentum ket");
    return k;
}

json peak_json(const SpectralPeak& p) {
    json j{{"freq_khz", io::num(p.freq_khz)}, {"magnitude", io::num(p.magnitude)}};
    if (p.assignment) {
        const auto& a = *p.assignment;
        j["assignment"] = {{"F", a.F},   {"j", a.j}, {"F2", a.F2}, {"j2", a.j2}, {"predicted_khz", io::num(a.predicted_khz)},
                           {"ambiguous", a.ambiguous}};
    } else {
        j["assignment"] = nullptr;
    }
    return j;
}

int cmd_rabi(const RabiArgs& a, Globals g) {
    json cfg = load_config(a.config, "rabi", g.seed);
    if (!a.channels.empty()) cfg["channels"] = io::read_json_file(a.channels);
    const ChannelSet set = cfg.contains("channels") ? io::channels_from_json(cfg["channels"]) : ChannelSet::cesium_f3();
    const TrapConfig trap = apply_trap_flags(cfg, a.trap_khz, a.atom);

    json init_cfg = cfg.contains("init") ? cfg["init"] : json::object();
    if (!a.init.empty()) init_cfg["preset"] = a.init;
    if (a.squeeze) init_cfg["squeeze"] = *a.squeeze;
    const std::string preset = io::get_or<std::string>(init_cfg, "preset", "squeezed");
    if (preset != "squeezed") throw InputError("rabi: unknown initial-state preset '" + preset + "' (available: squeezed)");
    const double squeeze = io::get_or<double>(init_cfg, "squeeze", 4.0);
    const AngularMomentumKet internal =
        init_cfg.contains("internal") ? ket_from_json(init_cfg["internal"], "init.internal") : AngularMomentumKet{3, 3, 3, -3};

    RabiOptions opt;
    opt.n_levels = a.levels ? *a.levels : io::get_or<int>(cfg, "n_levels", opt.n_levels);
    opt.n_basis = io::get_or<int>(cfg, "n_basis", opt.n_basis);
    opt.T_total_s = a.T_total ? *a.T_total : io::get_or<double>(cfg, "T_total_s", opt.T_total_s);
    opt.dt_s = a.dt ? *a.dt : io::get_or<double>(cfg, "dt_s", opt.dt_s);
    if (cfg.contains("target")) opt.target = ket_from_json(cfg["target"], "target");
    if (opt.n_levels < 1) throw InputError("rabi: n_levels must be >= 1");
    if (!(opt.T_total_s > 0.0) || !(opt.dt_s > 0.0)) throw InputError("rabi: T_total_s and dt_s must be positive");

    const double jitter = a.jitter ? *a.jitter : io::get_or<double>(cfg, "jitter", 0.0);
    int shots = a.shots ? *a.shots : io::get_or<int>(cfg, "shots", 1);
    if (!(jitter >= 0.0)) throw InputError("rabi: jitter must be non-negative");
    if (shots < 1) throw InputError("rabi: shots must be >= 1");
    if (jitter == 0.0) shots = 1;  // identical shots
    const double tol_hz = a.tolerance_hz ? *a.tolerance_hz : io::get_or<double>(cfg, "assign_tolerance_hz", 1.0);
    const int lowest = io::get_or<int>(cfg, "lowest_lines", 3);
    const int res_group = io::get_or<int>(cfg, "resolution_delta_n", 3);

    SpectrumOptions sopt;
    if (cfg.contains("spectrum")) {
        const auto& s = cfg["spectrum"];
        sopt.zero_pad_factor = io::get_or<int>(s, "zero_pad_factor", sopt.zero_pad_factor);
        sopt.peak_threshold = io::get_or<double>(s, "peak_threshold", sopt.peak_threshold);
        sopt.sidelobe_guard = io::get_or<double>(s, "sidelobe_guard", sopt.sidelobe_guard);
    }

    json resolved{{"channels", io::to_json(set, Precision::exact)},
                  {"trap", io::to_json(trap, Precision::exact)},
                  {"init", {{"preset", preset}, {"squeeze", squeeze}, {"internal", ket_json(internal)}}},
                  {"target", ket_json(opt.target)},
                  {"n_levels", opt.n_levels},
                  {"n_basis", opt.n_basis},
                  {"T_total_s", opt.T_total_s},
                  {"dt_s", opt.dt_s},
                  {"jitter", jitter},
                  {"shots", shots},
                  {"assign_tolerance_hz", tol_hz},
                  {"lowest_lines", lowest},
                  {"resolution_delta_n", res_group},
                  {"spectrum",
                   {{"zero_pad_factor", sopt.zero_pad_factor},
                    {"peak_threshold", sopt.peak_threshold},
                    {"sidelobe_guard", sopt.sidelobe_guard}}}};
    auto ctx = make_context("rabi", g, resolved, g.seed.value_or(1));

    const auto init = RabiInitialState::squeezed(squeeze, opt.n_basis, internal);
    const auto sys = build_system(set, trap, opt.n_levels, opt.n_basis);
    const auto model = build_model(sys, set, init, opt.target);

    const auto run = jitter_ensemble(set, init, trap, opt, jitter, shots, ctx.seed, ctx.threads, sopt);
    BeatSpectrum spec = run.spectrum;
    const auto report = assign_lines(spec, predict_lines(model), tol_hz);

    {
        io::CsvWriter w(ctx.file("population.csv"), {"t_s", "P"});
        for (std::size_t m = 0; m < run.series.P.size(); ++m) w.row({run.series.t(m), run.series.P[m]});
    }
    {
        io::CsvWriter w(ctx.file("spectrum.csv"), {"freq_khz", "amplitude"});
        for (std::size_t k = 0; k < spec.freqs_khz.size(); ++k) w.row({spec.freqs_khz[k], spec.amplitude[k]});
    }
    json peaks = json::array();
    for (const auto& p : spec.peaks) peaks.push_back(peak_json(p));
    json groups = json::array();
    for (const auto& gr : spec.groups) groups.push_back({{"delta_n", gr.delta_n}, {"center_khz", io::num(gr.center_khz)}, {"n_peaks", gr.peaks.size()}});
    json warnings = model.warnings;
    io::write_json_file(ctx.file("peaks.json"),
                        {{"T_total_s", io::num(spec.T_total_s)},
                         {"bin_khz", io::num(spec.bin_khz)},
                         {"captured_norm", io::num(model.captured_norm())},
                         {"dephased_background", io::num(model.dephased_background)},
                         {"assignment", {{"assigned", report.assigned}, {"unassigned", report.unassigned}, {"ambiguous", report.ambiguous}}},
                         {"groups", groups},
                         {"peaks", peaks},
                         {"warnings", warnings}});

    // Lowest transitions per channel, in the measurement format that invert reads.
    for (const auto& ch : set.channels) {
        const auto lines = lowest_transitions(spec, ch.F, lowest);
        if (lines.empty()) continue;
        MeasuredSpectrum m;
        m.delta_E_khz = lines;
        m.sigma_hz = 1e3 * spec.bin_khz;
        m.trap = trap;
        io::write_json_file(ctx.file("lowest_F" + std::to_string(ch.F) + ".json"), io::to_json(m));
    }

    if (jitter > 0.0) {
        const auto clean = jitter_ensemble(set, init, trap, opt, 0.0, 1, ctx.seed, 1, sopt);
        const auto refs = group_reference_lines(clean.spectrum, res_group);
        const auto res = resolve_lines(spec, refs);
        json lines = json::array();
        int n_res = 0;
        for (const auto& r : res) {
            n_res += r.resolved ? 1 : 0;
            lines.push_back({{"freq_khz", io::num(r.freq_khz)},
                             {"peak", io::num(r.peak)},
                             {"background", io::num(r.background)},
                             {"resolved", r.resolved}});
        }
        const double frac = res.empty() ? 0.0 : double(n_res) / double(res.size());
        io::write_json_file(ctx.file("resolution.json"), {{"delta_n", res_group},
                                                          {"jitter", io::num(jitter)},
                                                          {"shots", shots},
                                                          {"n_lines", res.size()},
                                                          {"n_resolved", n_res},
                                                          {"resolved_fraction", io::num(frac)},
                                                          {"readable", !res.empty() && frac >= 0.5},
                                                          {"lines", lines}});
        ctx.say("delta_n = " + std::to_string(res_group) + ": " + std::to_string(n_res) + "/" + std::to_string(res.size()) +
                " reference lines resolved");
    }
    ctx.write_manifest();
    ctx.say(std::to_string(spec.peaks.size()) + " peaks, " + std::to_string(report.assigned) + " assigned, " +
            std::to_string(spec.groups.size()) + " delta_n groups");
    for (const auto& w : model.warnings) std::cerr << "warning: " << w << '\n';
    return 0;
}

// --- noise-sweep ----------------------------------------------------------------------

struct SweepArgs {
    std::string config, mode, uncertainties;
    std::optional<int> n_sims, n_lines;
};

int cmd_noise_sweep(const SweepArgs& a, Globals g) {
    json cfg = load_config(a.config, "noise-sweep", g.seed);
    if (!a.mode.empty()) cfg["mode"] = a.mode;
    if (!a.uncertainties.empty()) cfg["uncertainties_hz"] = parse_list(a.uncertainties);
    if (a.n_sims) cfg["n_sims"] = *a.n_sims;
    if (a.n_lines) cfg["n_lines"] = *a.n_lines;
    if (g.seed) cfg["seed"] = *g.seed;
    if (!cfg.contains("uncertainties_hz")) throw InputError("noise-sweep: no uncertainties given");
    NoiseSweepConfig sc = io::sweep_from_json(cfg);
    const auto [dlo, dhi] = default_E0_window(sc.trap);
    if (std::isnan(sc.scan.E0_lo_khz)) sc.scan.E0_lo_khz = dlo;
    if (std::isnan(sc.scan.E0_hi_khz)) sc.scan.E0_hi_khz = dhi;

    auto ctx = make_context("noise-sweep", g, io::to_json(sc, Precision::exact), sc.seed);
    sc.threads = ctx.threads;
    const auto pts = run_noise_sweep(sc);
    {
        io::CsvWriter w(ctx.file("accuracy.csv"), {"uncertainty_hz", "mean_error_pct", "stderr_pct", "n_failed"});
        for (const auto& p : pts) w.row({p.uncertainty_hz, p.mean_error_pct, p.stderr_pct, double(p.n_failed)});
    }
    {
        io::CsvWriter w(ctx.file("per_sim.csv"), {"uncertainty_hz", "sim", "ok", "error_pct", "E0_khz"});
        for (const auto& p : pts)
            for (std::size_t s = 0; s < p.outcomes.size(); ++s) {
                const auto& o = p.outcomes[s];
                const double nan = std::numeric_limits<double>::quiet_NaN();
                w.row({p.uncertainty_hz, double(s), o.ok ? 1.0 : 0.0, o.ok ? o.error_pct : nan, o.ok ? o.E0_khz : nan});
            }
    }
    ctx.write_manifest();
    for (const auto& p : pts)
        ctx.say("u = " + io::fmt12(p.uncertainty_hz) + " Hz: " + io::fmt12(p.mean_error_pct) + " +- " +
                io::fmt12(p.stderr_pct) + " %  (" + std::to_string(p.n_failed) + " failed)");
    return 0;
}

void print_error(const std::string& kind, const std::string& message, int code) {
    json e{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
    std::cerr << e.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two atoms in a harmonic trap: eigenenergies, a(E) inversion, Rabi beat spectra"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    app.set_version_flag("--version", std::string(trapspec::version));

    Globals g;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Master seed (u64)");
    app.add_option("--threads", g.threads, "Worker threads (default: TRAPSPEC_THREADS, then all cores)")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output directory");
    app.add_flag("--quiet", g.quiet, "Suppress the stdout summary");

    ForwardArgs fa;
    auto* fwd = app.add_subcommand("forward", "Eigenenergies of a resonance model in a trap");
    fwd->add_option("--config", fa.config, "Config JSON or a run manifest");
    fwd->add_option("--model", fa.model, "Model JSON file, or 'null' for a = 0");
    fwd->add_option("--trap-khz", fa.trap_khz, "Trap frequency (kHz)");
    fwd->add_option("--atom", fa.atom, "Atom species (Cs, Rb87)");
    fwd->add_option("--levels", fa.levels, "Number of levels");

    InvertArgs ia;
    auto* inv = app.add_subcommand("invert", "Fit a(E) to measured transition energies");
    inv->add_option("--config", ia.config, "Config JSON or a run manifest");
    inv->add_option("--measurement", ia.measurement, "Measurement JSON");
    inv->add_option("--window", ia.window, "E0 window lo,hi (kHz)");
    inv->add_option("--grid-step", ia.grid_step, "E0 grid step (kHz)");
    inv->add_option("--prior", ia.prior, "E_khz,a_lo_a0,a_hi_a0");
    inv->add_option("--n-terms", ia.n_terms, "Resonance terms in the model (1 or 2)");
    inv->add_option("--curve-points", ia.curve_points, "Samples in curve.csv");

    RabiArgs ra;
    auto* rabi = app.add_subcommand("rabi", "Rabi population dynamics and beat spectrum");
    rabi->add_option("--config", ra.config, "Config JSON or a run manifest");
    rabi->add_option("--channels", ra.channels, "Channel-set JSON (default: built-in Cs f=3 set)");
    rabi->add_option("--init", ra.init, "Initial-state preset (squeezed)");
    rabi->add_option("--squeeze", ra.squeeze, "Squeeze factor of the initial state");
    rabi->add_option("--T-total", ra.T_total, "Total evolution time (s)");
    rabi->add_option("--dt", ra.dt, "Sample interval (s)");
    rabi->add_option("--jitter", ra.jitter, "Relative trap-frequency jitter per shot");
    rabi->add_option("--shots", ra.shots, "Shots in the jitter ensemble");
    rabi->add_option("--levels", ra.levels, "Levels per channel");
    rabi->add_option("--trap-khz", ra.trap_khz, "Trap frequency (kHz)");
    rabi->add_option("--atom", ra.atom, "Atom species (Cs, Rb87)");
    rabi->add_option("--tolerance-hz", ra.tolerance_hz, "Peak assignment tolerance (Hz)");

    SweepArgs sa;
    auto* sweep = app.add_subcommand("noise-sweep", "Monte Carlo accuracy versus line uncertainty");
    sweep->add_option("--config", sa.config, "Sweep config JSON or a run manifest");
    sweep->add_option("--mode", sa.mode, "raman or rabi");
    sweep->add_option("--uncertainties", sa.uncertainties, "Comma-separated uncertainties (Hz)");
    sweep->add_option("--n-sims", sa.n_sims, "Simulations per uncertainty");
    sweep->add_option("--n-lines", sa.n_lines, "Transition energies per simulated measurement");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what(), 2);
        return 2;
    }
    if (seed_opt->count() > 0) g.seed = seed_value;

    try {
        if (fwd->parsed()) return cmd_forward(fa, g);
        if (inv->parsed()) return cmd_invert(ia, g);
        if (rabi->parsed()) return cmd_rabi(ra, g);
        if (sweep->parsed()) return cmd_noise_sweep(sa, g);
    } catch (const Error& e) {
        print_error(e.kind(), e.what(), e.exit_code());
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        print_error("input", e.what(), 2);
        return 2;
    } catch (const std::exception& e) {
        print_error("internal", e.what(), 3);
        return 3;
    }
    return 2;
}
