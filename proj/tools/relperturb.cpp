// Command-line surface over the relative perturbation library: spectrum
// diagnostics, expansion reports, separation tests, dataset synthesis and
// the Monte Carlo experiment harness.
//
// Exit codes: 0 success (and all configured thresholds passed), 1 at least
// one threshold failed, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "relperturb/experiments.hpp"
#include "relperturb/serialize.hpp"

namespace fs = std::filesystem;
using namespace relperturb;
using relperturb::io::json;

namespace {

struct Check {
    std::string name;
    double value = 0.0;
    std::string requirement;
    bool ok = true;
};

void print_checks(const std::vector<Check>& checks) {
    for (const auto& c : checks)
        std::printf("[%s] %-28s value=%-12.6g requires %s\n", c.ok ? "PASS" : "FAIL",
                    c.name.c_str(), c.value, c.requirement.c_str());
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return j;
}

fs::path ensure_out_dir(const std::string& out) {
    fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw ConfigError("output directory not writable: " + out);
    return dir;
}

int parse_target(const std::string& spec, const std::string& kind) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos || spec.substr(0, colon) != kind) return -1;
    return std::atoi(spec.c_str() + colon + 1);
}

// -----------------------------------------------------------------------
// rank

int cmd_rank(const std::string& spectrum_path, int j_one_based, bool all,
             const std::string& out) {
    const SpectrumModel model = io::spectrum_from_json(io::load_json_file(spectrum_path));
    const fs::path dir = ensure_out_dir(out);
    io::Table table;
    table.header = {"j", "lambda", "gap", "rel_rank", "eigvec_sensitivity", "x_star"};
    std::vector<int> targets;
    if (all)
        for (int j = 0; j < model.dim(); ++j) targets.push_back(j);
    else
        targets.push_back(j_one_based - 1);

    std::printf("%4s %12s %12s %12s %12s %12s\n", "j", "lambda", "gap", "rel_rank",
                "sensitivity", "x*");
    for (int j : targets) {
        model.check_index(j);
        std::vector<std::string> row{std::to_string(j + 1),
                                     io::format_double(model.eigenvalue(j))};
        if (!model.is_simple(j)) {
            row.insert(row.end(), {"multiple", "multiple", "multiple", "multiple"});
            std::printf("%4d %12.6g %12s %12s %12s %12s\n", j + 1, model.eigenvalue(j),
                        "multiple", "multiple", "multiple", "multiple");
        } else if (model.dim() == 1) {
            row.insert(row.end(), {"no gap", "no gap", io::format_double(0.0), "no gap"});
            std::printf("%4d %12.6g %12s %12s %12.6g %12s\n", j + 1, model.eigenvalue(j),
                        "no gap", "no gap", 0.0, "no gap");
        } else {
            const double gap = spectral_gap(model, j);
            const double rank = relative_rank(model, j);
            const double sens = eigvec_sensitivity(model, j);
            const double x_star = 1.0 / (3.0 * rank);
            row.insert(row.end(), {io::format_double(gap), io::format_double(rank),
                                   io::format_double(sens), io::format_double(x_star)});
            std::printf("%4d %12.6g %12.6g %12.6g %12.6g %12.6g\n", j + 1, model.eigenvalue(j),
                        gap, rank, sens, x_star);
        }
        table.rows.push_back(std::move(row));
    }
    const std::uint64_t hash = fnv1a(io::spectrum_to_json(model).dump());
    io::write_csv(table, (dir / "rank.csv").string(), hash, 0);
    return 0;
}

// -----------------------------------------------------------------------
// expand / separate share the perturbation file format: either a dense
// symmetric matrix {"E": [[...]]} or {"rank_one_x": x} for the canonical
// rank-one direction.

MatrixXd perturbation_from_json(const SpectrumModel& model, const json& j) {
    if (j.contains("rank_one_x")) return rank_one_perturbation(model, j.at("rank_one_x"));
    if (!j.contains("E")) throw ConfigError("perturbation json needs 'E' or 'rank_one_x'");
    const auto rows = j.at("E").get<std::vector<std::vector<double>>>();
    const int d = model.dim();
    if (static_cast<int>(rows.size()) != d) throw ConfigError("perturbation must be d x d");
    MatrixXd e(d, d);
    for (int r = 0; r < d; ++r) {
        if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != d)
            throw ConfigError("perturbation must be d x d");
        for (int c = 0; c < d; ++c) e(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    return e;
}

int cmd_expand(const std::string& spectrum_path, const std::string& pert_path,
               std::vector<std::string> targets, bool all, int r0_one_based,
               const std::string& out) {
    const SpectrumModel model = io::spectrum_from_json(io::load_json_file(spectrum_path));
    const json pj = io::load_json_file(pert_path);
    const Perturbation pert = relative_coefficients(model, perturbation_from_json(model, pj));
    const EmpiricalSpectrum oracle = perturbed_spectrum(model, pert);
    const fs::path dir = ensure_out_dir(out);

    if (all) {
        targets.clear();
        for (int j = 0; j < model.dim(); ++j)
            if (model.is_simple(j)) {
                targets.push_back("eigenvalue:" + std::to_string(j + 1));
                targets.push_back("eigenvector:" + std::to_string(j + 1));
            }
        for (int r = 0; r < model.num_blocks(); ++r) {
            const int r0 = default_tail_block(model, r);
            if (r0 > r) {
                targets.push_back("block:" + std::to_string(r + 1));
                targets.push_back("projector:" + std::to_string(r + 1));
            }
        }
    }
    if (targets.empty()) throw ConfigError("no expansion targets given");

    json out_reports = json::array();
    io::Table table;
    table.header = {"target", "prediction", "oracle", "residual", "budget",
                    "condition_satisfied", "x", "rel_rank"};
    for (const auto& spec : targets) {
        ExpansionReport rep;
        if (int j = parse_target(spec, "eigenvalue"); j > 0)
            rep = eigenvalue_expansion(model, pert, j - 1, &oracle);
        else if (int jv = parse_target(spec, "eigenvector"); jv > 0)
            rep = eigenvector_expansion(model, pert, jv - 1, &oracle);
        else if (int rb = parse_target(spec, "block"); rb > 0)
            rep = multi_eigenvalue_expansion(
                model, pert, rb - 1,
                r0_one_based > 0 ? r0_one_based - 1 : default_tail_block(model, rb - 1), &oracle);
        else if (int rp = parse_target(spec, "projector"); rp > 0)
            rep = projector_expansion(
                model, pert, rp - 1,
                r0_one_based > 0 ? r0_one_based - 1 : default_tail_block(model, rp - 1), &oracle);
        else
            throw ConfigError("unknown target: " + spec);
        out_reports.push_back(io::report_to_json(rep));
        table.rows.push_back({rep.target, io::format_double(rep.prediction),
                              io::format_double(rep.oracle), io::format_double(rep.residual),
                              io::format_double(rep.budget), rep.condition_satisfied ? "1" : "0",
                              io::format_double(rep.x), io::format_double(rep.rel_rank)});
        std::printf("%-24s residual=%.6g budget=%.6g condition=%s\n", rep.target.c_str(),
                    rep.residual, rep.budget, rep.condition_satisfied ? "yes" : "no");
    }
    const std::uint64_t hash = fnv1a(pj.dump());
    std::ofstream(dir / "expand.json") << out_reports.dump(2) << "\n";
    io::write_csv(table, (dir / "expand.csv").string(), hash, 0);
    return 0;
}

int cmd_separate(const std::string& spectrum_path, const std::string& pert_path, int j_one_based,
                 std::vector<double> ys, const std::string& out) {
    const SpectrumModel model = io::spectrum_from_json(io::load_json_file(spectrum_path));
    const json pj = io::load_json_file(pert_path);
    const Perturbation pert = relative_coefficients(model, perturbation_from_json(model, pj));
    const EmpiricalSpectrum oracle = perturbed_spectrum(model, pert);
    const fs::path dir = ensure_out_dir(out);
    io::Table table;
    table.header = {"y", "premise_upper", "premise_lower", "implied_upper", "implied_lower",
                    "oracle_deviation", "upper_respected", "lower_respected"};
    for (double y : ys) {
        const SeparationResult r = separation_test(model, pert, j_one_based - 1, y, &oracle);
        const bool upper_ok = !r.implied_upper || r.oracle_deviation <= y + 1e-12;
        const bool lower_ok = !r.implied_lower || r.oracle_deviation >= -y - 1e-12;
        table.rows.push_back({io::format_double(y), io::format_double(r.premise_upper),
                              io::format_double(r.premise_lower), r.implied_upper ? "1" : "0",
                              r.implied_lower ? "1" : "0", io::format_double(r.oracle_deviation),
                              upper_ok ? "1" : "0", lower_ok ? "1" : "0"});
        std::printf("y=%.6g premise_up=%.6g premise_lo=%.6g deviation=%.6g\n", y,
                    r.premise_upper, r.premise_lower, r.oracle_deviation);
    }
    io::write_csv(table, (dir / "separate.csv").string(), fnv1a(pj.dump()), 0);
    return 0;
}

// -----------------------------------------------------------------------
// simulate

int cmd_simulate(const std::string& config_path, const std::string& out, std::uint64_t seed_flag,
                 bool seed_given, std::uint64_t trial) {
    json cfg = load_config(config_path);
    if (seed_given) cfg["seed"] = seed_flag;
    const std::uint64_t seed = cfg.value("seed", 0ULL);
    const SpectrumModel model = io::model_from_json(cfg.at("model"));
    const GeneratorConfig gen = io::generator_from_json(cfg.at("generator"), model, seed);
    if (gen.n <= 0) throw ConfigError("generator needs a positive sample count 'n'");
    const Dataset ds = sample_dataset(gen, trial);
    const fs::path dir = ensure_out_dir(out);

    json canonical = cfg;
    canonical.erase("threads");
    const std::uint64_t hash = fnv1a(canonical.dump());
    char hash_hex[20];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx", static_cast<unsigned long long>(hash));

    std::ofstream csv(dir / "dataset.csv");
    if (!csv) throw Error("cannot write dataset.csv");
    csv << "# config_hash=" << hash_hex << " seed=" << seed << "\n";
    for (int c = 0; c < ds.samples.cols(); ++c)
        csv << "x" << (c + 1) << (c + 1 < ds.samples.cols() ? "," : "\n");
    for (int r = 0; r < ds.samples.rows(); ++r)
        for (int c = 0; c < ds.samples.cols(); ++c)
            csv << io::format_double(ds.samples(r, c)) << (c + 1 < ds.samples.cols() ? "," : "\n");

    json sidecar;
    sidecar["config"] = cfg;
    sidecar["config_hash"] = hash_hex;
    sidecar["seed"] = seed;
    sidecar["trial"] = trial;
    sidecar["n"] = static_cast<int>(ds.samples.rows());
    sidecar["d"] = static_cast<int>(ds.samples.cols());
    sidecar["model"] = io::spectrum_to_json(model);
    std::ofstream(dir / "dataset_meta.json") << sidecar.dump(2) << "\n";
    std::printf("wrote %s (%lld x %lld)\n", (dir / "dataset.csv").c_str(),
                static_cast<long long>(ds.samples.rows()),
                static_cast<long long>(ds.samples.cols()));
    return 0;
}

// -----------------------------------------------------------------------
// experiment

int cmd_experiment(const std::string& config_path, const std::string& out,
                   std::uint64_t seed_flag, bool seed_given, int trials_flag, int threads_flag,
                   const std::string& format) {
    json cfg = load_config(config_path);
    if (seed_given) cfg["seed"] = seed_flag;
    if (trials_flag > 0) cfg["trials"] = trials_flag;

    json canonical = cfg;
    canonical.erase("threads");
    const std::uint64_t hash = fnv1a(canonical.dump());

    const std::string experiment = cfg.value("experiment", "");
    if (experiment.empty()) throw ConfigError("config needs an 'experiment' field");
    const std::string name = cfg.value("name", experiment);
    const std::uint64_t seed = cfg.value("seed", 0ULL);
    const int trials = cfg.value("trials", 0);
    if (trials <= 0) throw ConfigError("config needs a positive 'trials'");
    const int threads = threads_flag > 0 ? threads_flag : cfg.value("threads", 0);
    if (!cfg.contains("grid") || !cfg["grid"].is_object() || cfg["grid"].empty())
        throw ConfigError("config needs a non-empty 'grid'");
    const json grid = cfg["grid"];
    const json thresholds = cfg.value("thresholds", json::object());

    const SpectrumModel model = io::model_from_json(cfg.at("model"));
    GeneratorConfig gen = io::generator_from_json(cfg.value("generator", json::object()), model, seed);
    if (gen.n <= 0) gen.n = grid.value("n", 0);
    const fs::path dir = ensure_out_dir(out);

    std::vector<Check> checks;
    auto add_check = [&](std::string label, double value, std::string req, bool ok) {
        checks.push_back({std::move(label), value, std::move(req), ok});
    };
    auto in_range = [&](const char* label, double value, const json& range) {
        const double lo = range.at(0), hi = range.at(1);
        char req[64];
        std::snprintf(req, sizeof(req), "in [%g, %g]", lo, hi);
        add_check(label, value, req, value >= lo && value <= hi);
    };

    json result_doc;
    std::optional<std::pair<std::vector<double>, std::vector<double>>> series;
    std::optional<LineFit> series_fit;

    if (experiment == "event_probability") {
        const double x = grid.at("x");
        const int r0 = grid.value("r0", 0) > 0 ? grid.at("r0").get<int>() - 1
                                               : default_tail_block(model, 0);
        const auto res = estimate_event_probability(gen, x, r0, trials, threads);
        result_doc = io::to_json(res);
        if (thresholds.contains("p_full_max"))
            add_check("p_full", res.p_full, "<= " + io::format_double(thresholds["p_full_max"]),
                      res.p_full <= thresholds["p_full_max"].get<double>());
        add_check("block_within_full", res.p_block, "<= p_full", res.p_block <= res.p_full);
    } else if (experiment == "concentration") {
        const double rate = std::sqrt(std::log(static_cast<double>(gen.n)) / gen.n);
        const double x = grid.value("x_mult", 4.0) * rate;
        const auto res =
            run_concentration_experiment(gen, trials, x, grid.value("c1", 1.0), threads);
        result_doc = io::to_json(res);
        if (thresholds.contains("c2_max"))
            add_check("fitted_c2", res.fitted_c2,
                      "<= " + io::format_double(thresholds["c2_max"]),
                      res.fitted_c2 <= thresholds["c2_max"].get<double>());
        if (thresholds.contains("gated_fraction_min"))
            add_check("gated_fraction", res.gated_fraction,
                      ">= " + io::format_double(thresholds["gated_fraction_min"]),
                      res.gated_fraction >= thresholds["gated_fraction_min"].get<double>());
        add_check("deterministic_violations", res.deterministic_violations, "== 0",
                  res.deterministic_violations == 0);
    } else if (experiment == "anticoncentration") {
        const int spikes = grid.at("spikes");
        double y;
        if (grid.contains("y"))
            y = grid.at("y");
        else
            y = solve_margin_for_z(model, 0, grid.at("z"), gen.n);
        const auto res =
            run_anticoncentration_experiment(model, spikes, gen.n, y, trials, seed, threads);
        result_doc = io::to_json(res);
        if (thresholds.contains("p_max"))
            add_check("p_hat", res.p_hat, "<= " + io::format_double(thresholds["p_max"]),
                      res.p_hat <= thresholds["p_max"].get<double>());
    } else if (experiment == "clt") {
        const int j = grid.at("j").get<int>() - 1;
        const auto res = run_clt_experiment(gen, j, trials, threads);
        result_doc = io::to_json(res);
        if (thresholds.contains("ks_max"))
            add_check("ks", res.ks, "<= " + io::format_double(thresholds["ks_max"]),
                      res.ks <= thresholds["ks_max"].get<double>());
    } else if (experiment == "long_memory") {
        const auto ns = grid.at("ns").get<std::vector<int>>();
        const auto res = run_long_memory_limit(gen, ns, grid.at("j0"), trials, threads);
        result_doc = io::to_json(res);
        if (thresholds.value("median_monotone_decreasing", false)) {
            bool mono = true;
            for (std::size_t i = 1; i < res.per_n.size(); ++i)
                mono = mono && res.per_n[i].median_pairwise < res.per_n[i - 1].median_pairwise;
            add_check("median_monotone", res.per_n.back().median_pairwise,
                      "strictly decreasing in n", mono);
        }
        std::vector<double> xs, ys;
        for (const auto& row : res.per_n) {
            xs.push_back(row.n);
            ys.push_back(row.median_pairwise);
        }
        series = {{xs, ys}};
    } else if (experiment == "projector_risk") {
        const auto js = grid.at("j_positions").get<std::vector<int>>();
        const auto ns = grid.at("ns").get<std::vector<int>>();
        const int n_for_j = grid.value("n_for_j_slope", ns.back());
        const int j_for_n = grid.value("j_for_n_slope", js.front());
        const auto res = run_projector_risk(gen, js, ns, n_for_j, j_for_n, trials, threads);
        result_doc = io::to_json(res);
        if (thresholds.contains("slope_j")) in_range("slope_in_j", res.slope_in_j, thresholds["slope_j"]);
        if (thresholds.contains("slope_n")) in_range("slope_in_n", res.slope_in_n, thresholds["slope_n"]);
        std::vector<double> xs, ys;
        for (const auto& cell : res.cells)
            if (cell.n == n_for_j) {
                xs.push_back(cell.j_position);
                ys.push_back(cell.mean_risk);
            }
        series = {{xs, ys}};
        if (xs.size() >= 2) series_fit = loglog_slope(xs, ys);
    } else if (experiment == "goe_transfer") {
        const int block = grid.at("block").get<int>() - 1;
        const auto res = run_goe_transfer(gen, block, trials, threads);
        result_doc = io::to_json(res);
        if (thresholds.contains("p_min"))
            add_check("ks_p_value", res.p_value, ">= " + io::format_double(thresholds["p_min"]),
                      res.p_value >= thresholds["p_min"].get<double>());
        const double tol = thresholds.value("moment_tolerance_se", 4.0);
        for (const auto& mcheck : res.moments)
            add_check(mcheck.label, mcheck.mean,
                      "within " + io::format_double(tol) + " SE of " +
                          io::format_double(mcheck.expected),
                      std::abs(mcheck.mean - mcheck.expected) <= tol * mcheck.se);
    } else {
        throw ConfigError("unknown experiment: " + experiment);
    }

    bool passed = true;
    for (const auto& c : checks) passed = passed && c.ok;

    json doc = io::result_base(experiment, hash, seed, passed);
    doc.update(result_doc);
    json jchecks = json::array();
    for (const auto& c : checks)
        jchecks.push_back({{"name", c.name}, {"value", c.value}, {"requires", c.requirement}, {"ok", c.ok}});
    doc["checks"] = std::move(jchecks);

    std::ofstream(dir / (name + "_result.json")) << doc.dump(2) << "\n";
    io::write_csv(io::result_to_table(doc), (dir / (name + "_result.csv")).string(), hash, seed);
    if (format == "svg" && series && series->first.size() >= 2)
        io::write_loglog_svg((dir / (name + "_plot.svg")).string(), name, series->first,
                             series->second, series_fit);

    print_checks(checks);
    std::printf("%s: %s\n", name.c_str(), passed ? "PASS" : "FAIL");
    return passed ? 0 : 1;
}

int cmd_report(const std::string& input, const std::string& out, const std::string& format) {
    const json doc = io::load_json_file(input);
    const fs::path dir = ensure_out_dir(out);
    const std::string stem = fs::path(input).stem().string();
    std::uint64_t hash = 0;
    if (doc.contains("config_hash"))
        hash = std::strtoull(doc["config_hash"].get<std::string>().c_str(), nullptr, 16);
    if (format == "svg") {
        if (!doc.contains("series")) throw ConfigError("result has no series to plot");
        const auto xs = doc["series"]["x"].get<std::vector<double>>();
        const auto ys = doc["series"]["y"].get<std::vector<double>>();
        io::write_loglog_svg((dir / (stem + ".svg")).string(),
                             doc.value("experiment", "series"), xs, ys);
    } else {
        io::write_csv(io::result_to_table(doc), (dir / (stem + ".csv")).string(), hash,
                      doc.value("seed", 0ULL));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"relative spectral perturbation toolkit"};
    app.require_subcommand(1);

    std::string spectrum_path, pert_path, config_path, input_path, out_dir, format = "csv";
    std::vector<std::string> targets;
    std::vector<double> ys;
    std::uint64_t seed = 0, trial = 0;
    bool all = false;
    int j_target = 1, r0 = 0, trials = 0, threads = 0;

    auto* rank = app.add_subcommand("rank", "relative ranks, gaps and condition cutoffs");
    rank->add_option("spectrum", spectrum_path, "spectrum json file")->required();
    rank->add_option("--j", j_target, "1-based eigenvalue index");
    rank->add_flag("--all", all, "all indices");
    rank->add_option("--out", out_dir, "output directory");

    auto* expand = app.add_subcommand("expand", "linear expansion reports");
    expand->add_option("spectrum", spectrum_path)->required();
    expand->add_option("perturbation", pert_path)->required();
    expand->add_option("--target", targets, "eigenvalue:J | eigenvector:J | block:R | projector:R");
    expand->add_flag("--all", all, "every admissible target");
    expand->add_option("--r0", r0, "1-based first tail block (0 = automatic)");
    expand->add_option("--out", out_dir);

    auto* separate = app.add_subcommand("separate", "one-sided deviation implications");
    separate->add_option("spectrum", spectrum_path)->required();
    separate->add_option("perturbation", pert_path)->required();
    separate->add_option("--j", j_target)->required();
    separate->add_option("--y", ys, "margins")->required();
    separate->add_option("--out", out_dir);

    auto* simulate = app.add_subcommand("simulate", "synthesize one dataset");
    simulate->add_option("--config", config_path)->required();
    simulate->add_option("--out", out_dir);
    auto* sim_seed = simulate->add_option("--seed", seed);
    simulate->add_option("--trial", trial);

    auto* experiment = app.add_subcommand("experiment", "run a Monte Carlo experiment");
    experiment->add_option("--config", config_path)->required();
    experiment->add_option("--out", out_dir);
    auto* exp_seed = experiment->add_option("--seed", seed);
    experiment->add_option("--trials", trials);
    experiment->add_option("--threads", threads);
    experiment->add_option("--format", format)->check(CLI::IsMember({"csv", "json", "svg"}));

    auto* report = app.add_subcommand("report", "re-emit a result file as csv or svg");
    report->add_option("--input", input_path)->required();
    report->add_option("--out", out_dir);
    report->add_option("--format", format)->check(CLI::IsMember({"csv", "json", "svg"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (rank->parsed()) return cmd_rank(spectrum_path, j_target, all, out_dir);
        if (expand->parsed()) return cmd_expand(spectrum_path, pert_path, targets, all, r0, out_dir);
        if (separate->parsed()) return cmd_separate(spectrum_path, pert_path, j_target, ys, out_dir);
        if (simulate->parsed())
            return cmd_simulate(config_path, out_dir, seed, sim_seed->count() > 0, trial);
        if (experiment->parsed())
            return cmd_experiment(config_path, out_dir, seed, exp_seed->count() > 0, trials,
                                  threads, format);
        if (report->parsed()) return cmd_report(input_path, out_dir, format);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
