#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relperturb/errors.hpp"
#include "relperturb/experiments.hpp"
#include "relperturb/generators.hpp"
#include "relperturb/perturbation.hpp"
#include "relperturb/spectrum.hpp"
#include "relperturb/stats.hpp"

namespace relperturb::io {

using nlohmann::json;

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Spectrum files: {"eigenvalues": [...], "eigenvectors": [[row], ...],
// "grouping_tol": ...}; eigenvectors optional (identity assumed),
// stored row-major with column j holding the j-th eigenvector.

inline json spectrum_to_json(const SpectrumModel& m) {
    json j;
    j["eigenvalues"] = std::vector<double>(m.eigenvalues().data(),
                                           m.eigenvalues().data() + m.dim());
    if (!m.eigenvectors().isIdentity(0.0)) {
        json rows = json::array();
        for (int r = 0; r < m.dim(); ++r) {
            json row = json::array();
            for (int c = 0; c < m.dim(); ++c) row.push_back(m.eigenvectors()(r, c));
            rows.push_back(std::move(row));
        }
        j["eigenvectors"] = std::move(rows);
    }
    return j;
}

inline SpectrumModel spectrum_from_json(const json& j, double default_tol = 1e-8) {
    if (!j.contains("eigenvalues")) throw ConfigError("spectrum json needs 'eigenvalues'");
    const auto vals = j.at("eigenvalues").get<std::vector<double>>();
    VectorXd lam = Eigen::Map<const VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    const double tol = j.value("grouping_tol", default_tol);
    if (!j.contains("eigenvectors")) return SpectrumModel::from_eigenvalues(std::move(lam), tol);
    const auto rows = j.at("eigenvectors").get<std::vector<std::vector<double>>>();
    const int d = static_cast<int>(lam.size());
    if (static_cast<int>(rows.size()) != d) throw ConfigError("eigenvector matrix must be d x d");
    MatrixXd u(d, d);
    for (int r = 0; r < d; ++r) {
        if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != d)
            throw ConfigError("eigenvector matrix must be d x d");
        for (int c = 0; c < d; ++c) u(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    return SpectrumModel::build(std::move(lam), std::move(u), tol);
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file: " + path);
    json j;
    in >> j;
    return j;
}

/// Model block of a config: explicit eigenvalues, a decay family
/// ("poly" lambda_j = j^-alpha or "exp" lambda_j = e^-alpha j, with the
/// truncation dimension chosen automatically when "d" is absent), or a
/// reference to a spectrum file.
inline SpectrumModel model_from_json(const json& j) {
    if (j.contains("file")) return spectrum_from_json(load_json_file(j.at("file")));
    if (j.contains("eigenvalues")) return spectrum_from_json(j);
    if (j.contains("decay")) {
        const std::string decay = j.at("decay");
        const double alpha = j.at("alpha");
        const double tail_fraction = j.value("tail_fraction", 1e-6);
        int d = j.value("d", 0);
        VectorXd lam;
        if (decay == "poly") {
            if (d <= 0) d = suggested_truncation_poly(alpha, tail_fraction);
            lam.resize(d);
            for (int k = 0; k < d; ++k) lam[k] = std::pow(static_cast<double>(k + 1), -alpha);
        } else if (decay == "exp") {
            if (d <= 0) d = suggested_truncation_exp(alpha, tail_fraction);
            lam.resize(d);
            for (int k = 0; k < d; ++k) lam[k] = std::exp(-alpha * (k + 1));
        } else {
            throw ConfigError("unknown decay family: " + decay);
        }
        return SpectrumModel::from_eigenvalues(std::move(lam), j.value("grouping_tol", 1e-8));
    }
    throw ConfigError("model block needs 'eigenvalues', 'decay' or 'file'");
}

inline CoeffFamily family_from_string(const std::string& s) {
    if (s == "gaussian") return CoeffFamily::Gaussian;
    if (s == "student_t") return CoeffFamily::StudentT;
    if (s == "rademacher") return CoeffFamily::ScaledRademacher;
    throw ConfigError("unknown coefficient family: " + s);
}

inline Setting setting_from_string(const std::string& s) {
    if (s == "iid") return Setting::IID;
    if (s == "weak") return Setting::WeakDependence;
    if (s == "long_memory") return Setting::LongMemory;
    if (s == "one_factor") return Setting::OneFactor;
    if (s == "spiked") return Setting::SpikedFactor;
    throw ConfigError("unknown generator setting: " + s);
}

inline GeneratorConfig generator_from_json(const json& j, SpectrumModel model,
                                           std::uint64_t seed) {
    GeneratorConfig cfg;
    cfg.model = std::move(model);
    cfg.seed = seed;
    cfg.setting = setting_from_string(j.value("setting", "iid"));
    cfg.n = j.value("n", 0);
    cfg.family = family_from_string(j.value("family", "gaussian"));
    cfg.student_df = j.value("df", 9.0);
    cfg.dependence.decay_a = j.value("decay_a", 2.0);
    cfg.dependence.filter_length = j.value("filter_length", 0);
    cfg.long_memory.hurst = j.value("hurst", 0.8);
    cfg.long_memory.sigma = j.value("sigma", 0.5);
    cfg.factor.spikes = j.value("spikes", 1);
    return cfg;
}

inline json report_to_json(const ExpansionReport& r) {
    json j;
    j["target"] = r.target;
    j["prediction"] = r.prediction;
    j["oracle"] = r.oracle;
    j["residual"] = r.residual;
    j["budget"] = r.budget;
    j["condition_satisfied"] = r.condition_satisfied;
    j["x"] = r.x;
    j["rel_rank"] = r.rel_rank;
    if (std::isfinite(r.norm_residual)) {
        j["norm_residual"] = r.norm_residual;
        j["norm_budget"] = r.norm_budget;
    }
    if (std::isfinite(r.leading_residual)) j["leading_residual"] = r.leading_residual;
    return j;
}

// ---------------------------------------------------------------------------
// CSV tables. Every file starts with a provenance comment carrying the
// config hash and seed, then a header row; '.' decimal, UTF-8.

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline void write_csv(const Table& t, const std::string& path, std::uint64_t config_hash,
                      std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path);
    char prov[80];
    std::snprintf(prov, sizeof(prov), "# config_hash=%016llx seed=%llu\n",
                  static_cast<unsigned long long>(config_hash),
                  static_cast<unsigned long long>(seed));
    out << prov;
    for (std::size_t i = 0; i < t.header.size(); ++i)
        out << t.header[i] << (i + 1 < t.header.size() ? "," : "\n");
    for (const auto& row : t.rows)
        for (std::size_t i = 0; i < row.size(); ++i)
            out << row[i] << (i + 1 < row.size() ? "," : "\n");
}

// ---------------------------------------------------------------------------
// Minimal SVG log-log scatter with an optional fitted line. Decorative
// output; absence of a series never fails a run.

inline void write_loglog_svg(const std::string& path, const std::string& title,
                             const std::vector<double>& xs, const std::vector<double>& ys,
                             std::optional<LineFit> fit = std::nullopt) {
    if (xs.size() != ys.size() || xs.empty()) throw Error("svg: empty or mismatched series");
    const double width = 480, height = 360, margin = 48;
    double lx_min = std::log10(xs[0]), lx_max = lx_min;
    double ly_min = std::log10(ys[0]), ly_max = ly_min;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0) || !(ys[i] > 0)) throw Error("svg: log-log needs positive data");
        lx_min = std::min(lx_min, std::log10(xs[i]));
        lx_max = std::max(lx_max, std::log10(xs[i]));
        ly_min = std::min(ly_min, std::log10(ys[i]));
        ly_max = std::max(ly_max, std::log10(ys[i]));
    }
    if (lx_max == lx_min) lx_max = lx_min + 1;
    if (ly_max == ly_min) ly_max = ly_min + 1;
    auto px = [&](double lx) { return margin + (lx - lx_min) / (lx_max - lx_min) * (width - 2 * margin); };
    auto py = [&](double ly) { return height - margin - (ly - ly_min) / (ly_max - ly_min) * (height - 2 * margin); };

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << width / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
        << "</text>\n";
    svg << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
        << "' y2='" << height - margin << "' stroke='black'/>\n";
    svg << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
        << height - margin << "' stroke='black'/>\n";
    if (fit) {
        const double y0 = fit->intercept + fit->slope * lx_min * std::log(10.0);
        const double y1 = fit->intercept + fit->slope * lx_max * std::log(10.0);
        svg << "<line x1='" << px(lx_min) << "' y1='" << py(y0 / std::log(10.0)) << "' x2='"
            << px(lx_max) << "' y2='" << py(y1 / std::log(10.0))
            << "' stroke='#888' stroke-dasharray='4 3'/>\n";
        svg << "<text x='" << width - margin << "' y='" << margin
            << "' text-anchor='end' font-size='12'>slope " << fit->slope << "</text>\n";
    }
    for (std::size_t i = 0; i < xs.size(); ++i)
        svg << "<circle cx='" << px(std::log10(xs[i])) << "' cy='" << py(std::log10(ys[i]))
            << "' r='3' fill='#1f77b4'/>\n";
    svg << "</svg>\n";
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path);
    out << svg.str();
}

// ---------------------------------------------------------------------------
// Experiment results as {summary, table, series} documents so the report
// command can re-emit any of them generically.

inline json result_base(const std::string& experiment, std::uint64_t config_hash,
                        std::uint64_t seed, bool passed) {
    json j;
    j["experiment"] = experiment;
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash));
    j["config_hash"] = buf;
    j["seed"] = seed;
    j["passed"] = passed;
    return j;
}

inline json to_json(const EventProbabilityResult& r) {
    json j;
    j["summary"] = {{"n", r.n},          {"x", r.x},
                    {"r0", r.r0},        {"trials", r.trials},
                    {"p_full", r.p_full}, {"p_block", r.p_block},
                    {"ci_full_lo", r.ci_full.lo}, {"ci_full_hi", r.ci_full.hi},
                    {"ci_block_lo", r.ci_block.lo}, {"ci_block_hi", r.ci_block.hi},
                    {"bound_full", r.bound_full}, {"bound_block", r.bound_block}};
    return j;
}

inline json to_json(const ConcentrationResult& r) {
    json j;
    j["summary"] = {{"n", r.n},
                    {"trials", r.trials},
                    {"x", r.x},
                    {"c1", r.c1},
                    {"rate", r.rate},
                    {"gated_fraction", r.gated_fraction},
                    {"fitted_c2", r.fitted_c2},
                    {"deterministic_violations", r.deterministic_violations}};
    json table = json::array();
    for (const auto& row : r.per_j)
        table.push_back({{"j", row.j + 1},
                         {"rel_rank", row.rel_rank},
                         {"gated", row.gated},
                         {"q95_eig", row.q95_eig},
                         {"max_eig", row.max_eig},
                         {"q95_vec", row.q95_vec},
                         {"max_vec", row.max_vec}});
    j["table"] = std::move(table);
    return j;
}

inline json to_json(const AntiConcentrationResult& r) {
    json j;
    j["summary"] = {{"n", r.n},       {"trials", r.trials}, {"spikes", r.spikes},
                    {"y", r.y},       {"z", r.z},           {"p_hat", r.p_hat},
                    {"ci_lo", r.ci.lo}, {"ci_hi", r.ci.hi},
                    {"bound_unit_c", r.bound_unit_c}, {"c_fit", r.c_fit}};
    return j;
}

inline json to_json(const CltResult& r) {
    json j;
    j["summary"] = {{"n", r.n},   {"trials", r.trials},       {"j", r.j + 1},
                    {"ks", r.ks}, {"var_eta_sq", r.var_eta_sq}, {"mean_stat", r.mean_stat},
                    {"sd_stat", r.sd_stat}};
    return j;
}

inline json to_json(const LongMemoryResult& r) {
    json j;
    j["summary"] = {{"j0", r.j0}, {"trials", r.trials}, {"hurst", r.hurst}, {"sigma", r.sigma}};
    json table = json::array();
    for (const auto& row : r.per_n)
        table.push_back({{"n", row.n},
                         {"median_pairwise", row.median_pairwise},
                         {"marginal_mean", row.marginal_mean},
                         {"marginal_sd", row.marginal_sd},
                         {"marginal_ks_vs_fit", row.marginal_ks_vs_fit}});
    j["table"] = std::move(table);
    json series;
    series["xlabel"] = "n";
    series["ylabel"] = "median_pairwise";
    std::vector<double> xs, ys;
    for (const auto& row : r.per_n) {
        xs.push_back(row.n);
        ys.push_back(row.median_pairwise);
    }
    series["x"] = xs;
    series["y"] = ys;
    j["series"] = std::move(series);
    return j;
}

inline json to_json(const ProjectorRiskResult& r) {
    json j;
    j["summary"] = {{"trials", r.trials},
                    {"slope_in_j", r.slope_in_j},
                    {"slope_in_n", r.slope_in_n},
                    {"n_for_j_slope", r.n_for_j_slope},
                    {"j_for_n_slope", r.j_for_n_slope}};
    json table = json::array();
    for (const auto& cell : r.cells)
        table.push_back({{"j", cell.j_position},
                         {"n", cell.n},
                         {"mean_risk", cell.mean_risk},
                         {"se", cell.se},
                         {"ratio_to_j2_over_n", cell.ratio}});
    j["table"] = std::move(table);
    json series;
    series["xlabel"] = "j";
    series["ylabel"] = "mean_risk";
    std::vector<double> xs, ys;
    for (const auto& cell : r.cells)
        if (cell.n == r.n_for_j_slope) {
            xs.push_back(cell.j_position);
            ys.push_back(cell.mean_risk);
        }
    series["x"] = xs;
    series["y"] = ys;
    j["series"] = std::move(series);
    return j;
}

inline json to_json(const GoeTransferResult& r) {
    json j;
    j["summary"] = {{"block", r.block + 1}, {"multiplicity", r.multiplicity},
                    {"n", r.n},             {"trials", r.trials},
                    {"ks", r.ks},           {"p_value", r.p_value}};
    json table = json::array();
    for (const auto& m : r.moments)
        table.push_back({{"moment", m.label}, {"expected", m.expected}, {"mean", m.mean}, {"se", m.se}});
    j["table"] = std::move(table);
    return j;
}

/// Generic {summary, table} document to a CSV table: one row per table
/// entry, or a single summary row when no table is present.
inline Table result_to_table(const json& doc) {
    Table t;
    auto cell_to_string = [](const json& v) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
        if (v.is_number_integer()) return std::to_string(v.get<long long>());
        return format_double(v.get<double>());
    };
    if (doc.contains("table") && !doc["table"].empty()) {
        for (const auto& [key, value] : doc["table"][0].items()) {
            (void)value;
            t.header.push_back(key);
        }
        for (const auto& row : doc["table"]) {
            std::vector<std::string> cells;
            for (const auto& key : t.header) cells.push_back(cell_to_string(row.at(key)));
            t.rows.push_back(std::move(cells));
        }
    } else if (doc.contains("summary")) {
        std::vector<std::string> cells;
        for (const auto& [key, value] : doc["summary"].items()) {
            t.header.push_back(key);
            cells.push_back(cell_to_string(value));
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

}  // namespace relperturb::io
