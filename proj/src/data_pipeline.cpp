#include "fegap/data_pipeline.hpp"

#include "fegap/errors.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace fegap {

namespace {

const std::array<std::string, 2> kVehicleSuffix = {"_1", "_2"};

double parse_mpg(const std::string& cell, std::size_t row, const std::string& field) {
    if (cell.empty()) {
        throw DataError(row, field, "missing value");
    }
    double value = 0.0;
    if (!detail::parse_double(cell, value) || !std::isfinite(value)) {
        throw DataError(row, field, "not a number: '" + cell + "'");
    }
    if (value <= 0.0) {
        throw DataError(row, field, "nonpositive mpg");
    }
    return value;
}

int parse_year(const std::string& cell, std::size_t row, const std::string& field) {
    if (cell.empty()) {
        throw DataError(row, field, "missing value");
    }
    int value = 0;
    if (!detail::parse_int(cell, value)) {
        throw DataError(row, field, "not an integer: '" + cell + "'");
    }
    return value;
}

std::array<double, 2> mean_and_sd(const std::vector<PairedGapObservation>& obs, int v) {
    const double n = static_cast<double>(obs.size());
    double mean = 0.0;
    for (const auto& o : obs) mean += o.gap[v];
    mean /= n;
    double ss = 0.0;
    for (const auto& o : obs) ss += (o.gap[v] - mean) * (o.gap[v] - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

GarageTable parse_raw(std::istream& in, const ParseOptions& options) {
    std::string line;
    if (!detail::read_csv_line(in, line)) {
        throw DataError(0, "header", "empty input");
    }
    const std::vector<std::string> header = detail::split_csv(line);

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (!index.emplace(header[c], c).second) {
            throw DataError(0, header[c], "duplicate column");
        }
    }

    const std::string my1 = "my_mpg_1", my2 = "my_mpg_2";
    const std::string epa1 = options.epa_prefix + "_1", epa2 = options.epa_prefix + "_2";
    const std::vector<std::string> required = {"garage_id", my1, epa1, my2, epa2,
                                               "model_year_1", "model_year_2", "us_division"};
    for (const auto& name : required) {
        if (!index.count(name)) {
            throw DataError(0, name, "required column missing from header");
        }
    }

    GarageTable table;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (std::find(required.begin(), required.end(), header[c]) == required.end()) {
            table.covariate_columns.push_back(header[c]);
        }
    }

    std::size_t row = 0;
    while (detail::read_csv_line(in, line)) {
        if (line.empty()) continue;
        ++row;
        const std::vector<std::string> cells = detail::split_csv(line);
        if (cells.size() != header.size()) {
            const std::string field = cells.size() < header.size() ? header[cells.size()] : "<extra>";
            throw DataError(row, field,
                            "expected " + std::to_string(header.size()) + " fields, found " +
                                std::to_string(cells.size()));
        }
        auto cell = [&](const std::string& name) -> const std::string& { return cells[index.at(name)]; };

        RawGarageRecord rec;
        rec.garage_id = cell("garage_id");
        if (rec.garage_id.empty()) {
            throw DataError(row, "garage_id", "missing value");
        }
        rec.my_mpg = {parse_mpg(cell(my1), row, my1), parse_mpg(cell(my2), row, my2)};
        rec.epa_mpg = {parse_mpg(cell(epa1), row, epa1), parse_mpg(cell(epa2), row, epa2)};
        rec.model_year = {parse_year(cell("model_year_1"), row, "model_year_1"),
                          parse_year(cell("model_year_2"), row, "model_year_2")};
        if (rec.model_year[0] > rec.model_year[1]) {
            throw DataError(row, "model_year_1", "vehicle 1 must be the older vehicle");
        }
        rec.us_division = cell("us_division").empty() ? kNotReported : cell("us_division");
        for (const auto& name : table.covariate_columns) {
            const std::string& v = cell(name);
            rec.covariates.emplace(name, v.empty() ? std::string(kNotReported) : v);
        }
        table.records.push_back(std::move(rec));
    }
    return table;
}

void write_raw(std::ostream& out, const GarageTable& table, const ParseOptions& options) {
    const std::string& epa = options.epa_prefix;
    out << "garage_id,my_mpg_1," << epa << "_1,my_mpg_2," << epa << "_2,model_year_1,model_year_2,us_division";
    for (const auto& c : table.covariate_columns) out << ',' << detail::csv_escape(c);
    out << '\n';
    for (const auto& r : table.records) {
        out << detail::csv_escape(r.garage_id) << ',' << detail::format_double(r.my_mpg[0]) << ','
            << detail::format_double(r.epa_mpg[0]) << ',' << detail::format_double(r.my_mpg[1]) << ','
            << detail::format_double(r.epa_mpg[1]) << ',' << r.model_year[0] << ',' << r.model_year[1] << ','
            << detail::csv_escape(r.us_division);
        for (const auto& c : table.covariate_columns) {
            auto it = r.covariates.find(c);
            out << ',' << (it == r.covariates.end() ? std::string() : detail::csv_escape(it->second));
        }
        out << '\n';
    }
}

std::vector<PairedGapObservation> compute_gaps(const std::vector<RawGarageRecord>& records) {
    std::vector<PairedGapObservation> obs;
    obs.reserve(records.size());
    for (const auto& r : records) {
        PairedGapObservation o;
        o.garage_id = r.garage_id;
        for (int v = 0; v < 2; ++v) {
            o.gap[v] = r.my_mpg[v] / r.epa_mpg[v];
            o.diff[v] = r.epa_mpg[v] - r.my_mpg[v];
        }
        o.source = r;
        obs.push_back(std::move(o));
    }
    return obs;
}

TrimResult trim_outliers(const std::vector<PairedGapObservation>& obs, double multiplier) {
    if (!(multiplier > 0.0)) {
        throw std::invalid_argument("trim multiplier must be positive");
    }
    if (obs.size() < 3) {
        throw NumericError("insufficient sample for trimming");
    }
    TrimResult result;
    TrimReport& rep = result.report;
    rep.n_input = obs.size();
    rep.multiplier = multiplier;
    std::array<double, 2> lo{}, hi{};
    for (int v = 0; v < 2; ++v) {
        const auto [mu, sd] = mean_and_sd(obs, v);
        rep.mu[v] = mu;
        rep.sd[v] = sd;
        lo[v] = mu - multiplier * sd;
        hi[v] = mu + multiplier * sd;
    }
    for (const auto& o : obs) {
        bool out = false;
        for (int v = 0; v < 2; ++v) {
            if (o.gap[v] < lo[v] || o.gap[v] > hi[v]) {
                ++rep.outside[v];
                out = true;
            }
        }
        if (out) {
            rep.removed_ids.push_back(o.garage_id);
            result.removed.push_back(o);
        } else {
            result.kept.push_back(o);
        }
    }
    rep.n_kept = result.kept.size();
    rep.n_removed = result.removed.size();
    return result;
}

double gap_correlation(const std::vector<PairedGapObservation>& obs) {
    if (obs.size() < 3) {
        throw NumericError("gap correlation needs at least 3 observations");
    }
    const double n = static_cast<double>(obs.size());
    double m1 = 0.0, m2 = 0.0;
    for (const auto& o : obs) {
        m1 += o.gap[0];
        m2 += o.gap[1];
    }
    m1 /= n;
    m2 /= n;
    double s11 = 0.0, s22 = 0.0, s12 = 0.0;
    for (const auto& o : obs) {
        const double a = o.gap[0] - m1, b = o.gap[1] - m2;
        s11 += a * a;
        s22 += b * b;
        s12 += a * b;
    }
    if (s11 <= 0.0 || s22 <= 0.0) {
        throw NumericError("degenerate series");
    }
    return std::clamp(s12 / std::sqrt(s11 * s22), -1.0, 1.0);
}

std::string YearBin::label() const { return std::to_string(first) + "-" + std::to_string(last); }

std::vector<YearBin> default_year_bins() {
    return {{1984, 1988}, {1989, 1993}, {1994, 1998}, {1999, 2003}, {2004, 2008}, {2009, 2014}};
}

std::vector<YearBin> parse_year_bins(const std::string& text) {
    std::vector<YearBin> bins;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto dash = item.find('-');
        YearBin b;
        if (dash == std::string::npos || !detail::parse_int(item.substr(0, dash), b.first) ||
            !detail::parse_int(item.substr(dash + 1), b.last) || b.first > b.last) {
            throw std::invalid_argument("bad year bin '" + item + "', expected FIRST-LAST");
        }
        bins.push_back(b);
    }
    if (bins.empty()) {
        throw std::invalid_argument("no year bins given");
    }
    return bins;
}

std::vector<GroupRow> group_summary(const std::vector<PairedGapObservation>& obs,
                                    const std::vector<std::string>& keys, const std::vector<YearBin>& bins) {
    auto bin_of = [&](int year) -> std::string {
        for (const auto& b : bins) {
            if (year >= b.first && year <= b.last) return b.label();
        }
        return "other";
    };
    auto resolve = [&](const PairedGapObservation& o, const std::string& key) -> std::string {
        const RawGarageRecord& r = o.source;
        if (key == "us_division") return r.us_division;
        if (key == "garage_id") return r.garage_id;
        if (key == "model_year_1") return std::to_string(r.model_year[0]);
        if (key == "model_year_2") return std::to_string(r.model_year[1]);
        if (key == "model_year_bin_1") return bin_of(r.model_year[0]);
        if (key == "model_year_bin_2") return bin_of(r.model_year[1]);
        auto it = r.covariates.find(key);
        if (it == r.covariates.end()) {
            throw SpecError("unknown grouping key '" + key + "'");
        }
        return it->second;
    };

    struct Acc {
        std::size_t n = 0;
        double s1 = 0.0, s2 = 0.0;
    };
    std::map<std::vector<std::string>, Acc> groups;
    for (const auto& o : obs) {
        std::vector<std::string> key;
        key.reserve(keys.size());
        for (const auto& k : keys) key.push_back(resolve(o, k));
        Acc& a = groups[key];
        ++a.n;
        a.s1 += o.gap[0];
        a.s2 += o.gap[1];
    }
    std::vector<GroupRow> rows;
    rows.reserve(groups.size());
    for (const auto& [key, a] : groups) {
        rows.push_back({key, a.n, a.s1 / static_cast<double>(a.n), a.s2 / static_cast<double>(a.n)});
    }
    return rows;
}

void write_group_summary_csv(std::ostream& out, const std::vector<std::string>& keys,
                             const std::vector<GroupRow>& rows) {
    for (const auto& k : keys) out << detail::csv_escape(k) << ',';
    out << "n,mean_gap_1,mean_gap_2\n";
    for (const auto& r : rows) {
        for (const auto& k : r.key) out << detail::csv_escape(k) << ',';
        out << r.n << ',' << detail::format_double(r.mean_gap_1) << ',' << detail::format_double(r.mean_gap_2)
            << '\n';
    }
}

}  // namespace fegap
