#include "fegap/cli.hpp"

#include "fegap/data_pipeline.hpp"
#include "fegap/errors.hpp"
#include "fegap/model_selection.hpp"
#include "fegap/model_spec.hpp"
#include "fegap/quasirandom.hpp"
#include "fegap/rp_msl.hpp"
#include "fegap/serialization.hpp"
#include "fegap/sure_core.hpp"
#include "fegap/synthetic.hpp"
#include "text_util.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace fegap::cli {

namespace {

namespace fs = std::filesystem;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return in;
}

std::ofstream open_out(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in = open_in(path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& ex) {
        throw UsageError("'" + path + "' is not valid JSON: " + ex.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out = open_out(path);
    out << text;
    if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// Records everything a command read and wrote so reruns can be compared.
class Manifest {
public:
    Manifest(std::string command, const CLI::App& sub) : command_(std::move(command)) {
        for (const CLI::Option* o : sub.get_options()) {
            if (o->get_name() == "--help" || o->get_name().empty()) continue;
            std::string value;
            if (o->count() > 0) {
                for (const auto& r : o->results()) value += (value.empty() ? "" : " ") + r;
            } else {
                value = o->get_default_str();
            }
            options_[o->get_name()] = value;
        }
    }

    void input(const std::string& path) { inputs_.emplace_back(path, file_hash(path)); }
    void output(const std::string& path) { outputs_.emplace_back(path, file_hash(path)); }

    void write(const std::string& path) const {
        ojson j;
        j["command"] = command_;
        j["tool_version"] = std::string("fegap ") + kVersion;
        j["options"] = options_;
        auto files = [](const auto& list) {
            ojson arr = ojson::array();
            for (const auto& [p, h] : list) arr.push_back({{"path", p}, {"fnv1a64", h}});
            return arr;
        };
        j["inputs"] = files(inputs_);
        j["outputs"] = files(outputs_);
        j["duration_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_text(path, j.dump(2) + "\n");
    }

private:
    std::string command_;
    std::map<std::string, std::string> options_;
    std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<PairedGapObservation> load_gaps(const std::string& path, const ParseOptions& popts) {
    std::ifstream in = open_in(path);
    return compute_gaps(parse_raw(in, popts).records);
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
    std::string input;
    std::string out;
    double trim_sd = 3.0;
    std::string group_by = "us_division,model_year_bin_1";
    std::string year_bins = "1984-1988,1989-1993,1994-1998,1999-2003,2004-2008,2009-2014";
    std::string epa_column = "epa_mpg";
};

int cmd_prepare(const PrepareArgs& a, const CLI::App& sub, std::ostream& out) {
    Manifest manifest("prepare", sub);
    const ParseOptions popts{a.epa_column};
    const std::vector<YearBin> bins = parse_year_bins(a.year_bins);
    const std::vector<std::string> keys = split_list(a.group_by);

    std::ifstream in = open_in(a.input);
    const GarageTable table = parse_raw(in, popts);
    manifest.input(a.input);
    const std::vector<PairedGapObservation> obs = compute_gaps(table.records);
    const TrimResult trimmed = trim_outliers(obs, a.trim_sd);

    const fs::path dir(a.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + a.out + "'");

    std::set<std::string> removed(trimmed.report.removed_ids.begin(), trimmed.report.removed_ids.end());
    {
        std::ostringstream gaps;
        gaps << "garage_id,gap_1,gap_2,diff_1,diff_2,kept\n";
        for (const auto& o : obs) {
            gaps << detail::csv_escape(o.garage_id) << ',' << detail::format_double(o.gap[0]) << ','
                 << detail::format_double(o.gap[1]) << ',' << detail::format_double(o.diff[0]) << ','
                 << detail::format_double(o.diff[1]) << ',' << (removed.count(o.garage_id) ? 0 : 1) << '\n';
        }
        write_text((dir / "gaps.csv").string(), gaps.str());
    }
    {
        GarageTable kept;
        kept.covariate_columns = table.covariate_columns;
        for (const auto& o : trimmed.kept) kept.records.push_back(o.source);
        std::ostringstream csv;
        write_raw(csv, kept, popts);
        write_text((dir / "trimmed.csv").string(), csv.str());
    }
    std::optional<double> corr;
    try {
        corr = gap_correlation(trimmed.kept);
    } catch (const NumericError&) {
    }
    write_text((dir / "trim_report.json").string(), to_json(trimmed.report, corr).dump(2) + "\n");
    if (!keys.empty()) {
        std::ostringstream csv;
        write_group_summary_csv(csv, keys, group_summary(trimmed.kept, keys, bins));
        write_text((dir / "group_summary.csv").string(), csv.str());
    }
    for (const char* f : {"gaps.csv", "trimmed.csv", "trim_report.json", "group_summary.csv"}) {
        if (fs::exists(dir / f)) manifest.output((dir / f).string());
    }
    manifest.write((dir / "manifest.json").string());

    out << "input rows: " << trimmed.report.n_input << ", kept: " << trimmed.report.n_kept
        << ", removed: " << trimmed.report.n_removed << " (vehicle 1 outside: " << trimmed.report.outside[0]
        << ", vehicle 2 outside: " << trimmed.report.outside[1] << ")\n";
    return kSuccess;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
    std::string data;
    std::string spec;
    std::string estimator;
    std::string out;
    std::size_t draws = 400;
    std::size_t burn = 50;
    std::string bases;
    int threads = 1;
    int max_iter = 500;
    double grad_tol = 1e-5;
    double rel_tol = 1e-9;
    double hessian_step = 1e-4;
    std::string cov_denominator = "n";
    std::string epa_column = "epa_mpg";
};

int cmd_fit(const FitArgs& a, const CLI::App& sub, std::ostream& out) {
    Manifest manifest("fit", sub);
    const ModelSpec spec = ModelSpec::from_json(read_json(a.spec));
    manifest.input(a.spec);
    const std::vector<PairedGapObservation> obs = load_gaps(a.data, ParseOptions{a.epa_column});
    manifest.input(a.data);

    FglsOptions fopts;
    fopts.denominator = a.cov_denominator == "n-k" ? CovarianceDenominator::NMinusK : CovarianceDenominator::N;

    ojson result;
    int code = kSuccess;
    if (a.estimator == "ols" || a.estimator == "sure") {
        const DesignMatrices dm = encode_design(obs, spec.all_fixed());
        const SureFit fit = a.estimator == "ols" ? ols_system_fit(dm, fopts) : fgls_fit(dm, fopts);
        result = to_json(fit);
        out << a.estimator << ": n=" << fit.n << " k=" << fit.k << " loglik=" << fit.loglik << "\n";
    } else {
        const DesignMatrices dm = encode_design(obs, spec);
        const std::size_t dims = dm.random_count();
        HaltonConfig hc = HaltonConfig::with_dimensions(dims, a.draws, a.burn);
        if (!a.bases.empty()) {
            hc.bases.clear();
            for (const auto& b : split_list(a.bases)) {
                int v = 0;
                if (!detail::parse_int(b, v) || v < 2) throw UsageError("bad Halton base '" + b + "'");
                hc.bases.push_back(static_cast<unsigned>(v));
            }
            if (hc.bases.size() != dims) {
                throw UsageError("--bases lists " + std::to_string(hc.bases.size()) + " bases but the spec has " +
                                 std::to_string(dims) + " random coefficients");
            }
        }
        hc.validate();
        std::optional<DrawStore> store;
        if (dims > 0) store.emplace(static_cast<std::size_t>(dm.rows()), hc);

        RpFitOptions ropts;
        ropts.threads = a.threads;
        ropts.hessian_step = a.hessian_step;
        ropts.bfgs.max_iterations = a.max_iter;
        ropts.bfgs.gradient_tolerance = a.grad_tol;
        ropts.bfgs.relative_tolerance = a.rel_tol;
        RpSureFit fit = fit_rp_sure(dm, store ? &*store : nullptr, ropts);
        if (dims == 0) {
            fit.draws = 0;
            fit.burn = 0;
        }
        result = to_json(fit);
        if (!fit.convergence.converged) code = kNotConverged;
        out << "rp-sure: n=" << fit.n << " k=" << fit.k << " loglik=" << fit.loglik << " ("
            << fit.convergence.status << ", " << fit.convergence.iterations << " iterations)\n";
    }
    write_text(a.out, result.dump(2) + "\n");
    manifest.output(a.out);
    manifest.write(a.out + ".manifest.json");
    return code;
}

// ---------------------------------------------------------------- compare

struct CompareArgs {
    std::vector<std::string> fits;
    std::vector<std::string> labels;
    std::string out;
};

int cmd_compare(const CompareArgs& a, const CLI::App& sub, std::ostream& out) {
    if (a.fits.size() < 2) throw UsageError("compare needs at least two fit files");
    if (!a.labels.empty() && a.labels.size() != a.fits.size()) {
        throw UsageError("--labels must name every fit file");
    }
    Manifest manifest("compare", sub);
    std::vector<std::pair<std::string, CriteriaInput>> models;
    for (std::size_t i = 0; i < a.fits.size(); ++i) {
        std::ifstream in(a.fits[i], std::ios::binary);
        if (!in) throw UsageError("cannot read fit file '" + a.fits[i] + "'");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& ex) {
            throw UsageError("fit file '" + a.fits[i] + "' is not valid JSON");
        }
        const FitSummary s = read_fit_summary(j);
        manifest.input(a.fits[i]);
        const std::string label = a.labels.empty() ? fs::path(a.fits[i]).stem().string() : a.labels[i];
        models.emplace_back(label, s.criteria_input());
    }
    const RankingTable table = rank_models(models);
    write_criteria_text(out, table);
    if (!a.out.empty()) {
        std::ostringstream csv;
        write_criteria_csv(csv, table);
        write_text(a.out, csv.str());
        manifest.output(a.out);
        manifest.write(a.out + ".manifest.json");
    }
    return kSuccess;
}

// ---------------------------------------------------------------- effects

struct EffectsArgs {
    std::string fit;
    std::string out;
};

int cmd_effects(const EffectsArgs& a, const CLI::App& sub, std::ostream& out) {
    Manifest manifest("effects", sub);
    const FitSummary s = read_fit_summary(read_json(a.fit));
    manifest.input(a.fit);
    if (s.random.empty()) throw UsageError("no random coefficients");
    std::vector<RpEffectSummary> effects;
    for (const auto& r : s.random) effects.push_back(rp_effect(r.equation + ":" + r.name, r.mu, r.sigma));
    std::ostringstream csv;
    write_effects_csv(csv, effects);
    if (a.out.empty()) {
        out << csv.str();
    } else {
        write_text(a.out, csv.str());
        manifest.output(a.out);
        manifest.write(a.out + ".manifest.json");
    }
    return kSuccess;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string truth;
    long long n = 0;
    std::uint64_t seed = 0;
    std::string out;
    std::string draws_out;
};

int cmd_simulate(const SimulateArgs& a, const CLI::App& sub, std::ostream& out) {
    if (a.n < 1) throw UsageError("--n must be at least 1");
    Manifest manifest("simulate", sub);
    nlohmann::json j = read_json(a.truth);
    manifest.input(a.truth);
    j["n"] = a.n;
    j["seed"] = a.seed;
    const TruthSpec truth = TruthSpec::from_json(j);
    const SyntheticDataset ds = simulate_dataset(truth);
    std::ostringstream csv;
    write_synthetic_csv(csv, ds);
    write_text(a.out, csv.str());
    manifest.output(a.out);
    if (!a.draws_out.empty()) {
        std::ostringstream side;
        write_realized_draws_csv(side, ds);
        write_text(a.draws_out, side.str());
        manifest.output(a.draws_out);
    }
    manifest.write(a.out + ".manifest.json");
    out << "wrote " << truth.n << " synthetic garages to " << a.out << "\n";
    return kSuccess;
}

}  // namespace

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for hashing");
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 14];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fuel-economy gap estimation: data preparation, SURE and random-parameter SURE fits, "
                 "model comparison, effect summaries, synthetic data.",
                 "fegap"};
    app.set_version_flag("--version", std::string("fegap ") + kVersion);
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    PrepareArgs pa;
    CLI::App* prepare = app.add_subcommand("prepare", "Compute gap ratios, trim outliers, summarize groups");
    prepare->add_option("--input,--data", pa.input, "Raw garage CSV")->required();
    prepare->add_option("--out,--output", pa.out, "Output directory")->required();
    prepare->add_option("--trim-sd", pa.trim_sd, "Trimming multiplier c in mean +/- c*SD")
        ->check(CLI::PositiveNumber);
    prepare->add_option("--group-by", pa.group_by, "Comma-separated grouping keys for the summary");
    prepare->add_option("--year-bins", pa.year_bins, "Model-year bins FIRST-LAST,...");
    prepare->add_option("--epa-column", pa.epa_column, "EPA rating column prefix");

    FitArgs fa;
    CLI::App* fit = app.add_subcommand("fit", "Estimate OLS, fixed SURE, or random-parameter SURE");
    fit->add_option("--data,--input", fa.data, "Garage CSV (raw or trimmed)")->required();
    fit->add_option("--spec", fa.spec, "Model specification JSON")->required();
    fit->add_option("--estimator", fa.estimator, "ols | sure | rp-sure")
        ->required()
        ->check(CLI::IsMember({"ols", "sure", "rp-sure"}));
    fit->add_option("--out,--output", fa.out, "Fit JSON path")->required();
    fit->add_option("--draws", fa.draws, "Halton draws per observation")->check(CLI::PositiveNumber);
    fit->add_option("--burn", fa.burn, "Leading Halton points discarded");
    fit->add_option("--bases", fa.bases, "Comma-separated Halton primes (default: first D primes)");
    fit->add_option("--threads", fa.threads, "Worker threads for the likelihood")->check(CLI::PositiveNumber);
    fit->add_option("--max-iter", fa.max_iter, "Maximum optimizer iterations")->check(CLI::PositiveNumber);
    fit->add_option("--grad-tol", fa.grad_tol, "Gradient infinity-norm tolerance");
    fit->add_option("--rel-tol", fa.rel_tol, "Relative log-likelihood change tolerance");
    fit->add_option("--hessian-step", fa.hessian_step, "Relative step for the numerical Hessian");
    fit->add_option("--cov-denominator", fa.cov_denominator, "Residual covariance denominator: n | n-k")
        ->check(CLI::IsMember({"n", "n-k"}));
    fit->add_option("--epa-column", fa.epa_column, "EPA rating column prefix");

    CompareArgs ca;
    CLI::App* compare = app.add_subcommand("compare", "Score fits with AIC, CAIC, SBIC and ICOMP");
    compare->add_option("--fits,fits", ca.fits, "Fit JSON files (two or more)")->required();
    compare->add_option("--labels", ca.labels, "Labels for the fits, in order");
    compare->add_option("--out,--output", ca.out, "Criteria CSV path");

    EffectsArgs ea;
    CLI::App* effects = app.add_subcommand("effects", "Random-parameter shares above/below zero and ranges");
    effects->add_option("--fit", ea.fit, "Random-parameter fit JSON")->required();
    effects->add_option("--out,--output", ea.out, "Effects CSV path (default: standard output)");

    SimulateArgs sa;
    CLI::App* simulate = app.add_subcommand("simulate", "Generate a synthetic garage dataset from a truth JSON");
    simulate->add_option("--truth", sa.truth, "Truth specification JSON")->required();
    simulate->add_option("--n", sa.n, "Number of garages")->required();
    simulate->add_option("--seed", sa.seed, "64-bit generator seed")->required();
    simulate->add_option("--out,--output", sa.out, "Output CSV path")->required();
    simulate->add_option("--draws-out", sa.draws_out, "Optional CSV of realized coefficient draws");

    std::vector<const char*> argv{"fegap"};
    for (const auto& s : args) argv.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kSuccess;
    } catch (const CLI::CallForVersion& e) {
        app.exit(e, out, err);
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(pa, *prepare, out);
        if (fit->parsed()) return cmd_fit(fa, *fit, out);
        if (compare->parsed()) return cmd_compare(ca, *compare, out);
        if (effects->parsed()) return cmd_effects(ea, *effects, out);
        if (simulate->parsed()) return cmd_simulate(sa, *simulate, out);
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const SpecError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::domain_error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kUsage;
}

}  // namespace fegap::cli
