#pragma once

#include <array>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace fegap {

inline constexpr const char* kNotReported = "Not reported";

/// One two-vehicle garage as read from the input CSV. Vehicle 1 is the older
/// model year. Columns beyond the required ones are kept verbatim in
/// `covariates`, keyed by header name (e.g. "fuel_type_1"); empty cells are
/// stored as "Not reported".
struct RawGarageRecord {
    std::string garage_id;
    std::array<double, 2> my_mpg{};
    std::array<double, 2> epa_mpg{};
    std::array<int, 2> model_year{};
    std::string us_division;
    std::map<std::string, std::string> covariates;
};

struct GarageTable {
    std::vector<std::string> covariate_columns;  // header order
    std::vector<RawGarageRecord> records;
};

struct ParseOptions {
    // Column prefix of the EPA rating used as the gap denominator. The
    // default is the test-cycle rating; a label-rating column such as
    // "epa_label_mpg" can be selected instead.
    std::string epa_prefix = "epa_mpg";
};

/// Parses a header-bearing comma-delimited stream. Fails fast on the first
/// bad row with a DataError carrying the 1-based data-row index.
GarageTable parse_raw(std::istream& in, const ParseOptions& options = {});

/// Writes records back in the input schema (the EPA column is written under
/// the name selected by `options`).
void write_raw(std::ostream& out, const GarageTable& table, const ParseOptions& options = {});

struct PairedGapObservation {
    std::string garage_id;
    std::array<double, 2> gap{};   // my_mpg / epa_mpg
    std::array<double, 2> diff{};  // epa_mpg - my_mpg, in mpg
    RawGarageRecord source;
};

std::vector<PairedGapObservation> compute_gaps(const std::vector<RawGarageRecord>& records);

struct TrimReport {
    std::size_t n_input = 0;
    std::size_t n_kept = 0;
    std::size_t n_removed = 0;
    std::array<std::size_t, 2> outside{};  // per vehicle, may overlap
    std::vector<std::string> removed_ids;
    std::array<double, 2> mu{};
    std::array<double, 2> sd{};
    double multiplier = 3.0;
};

struct TrimResult {
    std::vector<PairedGapObservation> kept;
    std::vector<PairedGapObservation> removed;
    TrimReport report;
};

/// Single-pass mean +/- c*SD trimming over both gaps (sample SD, N-1). An
/// observation is removed when either gap falls outside its interval.
TrimResult trim_outliers(const std::vector<PairedGapObservation>& obs, double multiplier = 3.0);

double gap_correlation(const std::vector<PairedGapObservation>& obs);

struct YearBin {
    int first = 0;
    int last = 0;
    std::string label() const;
};

std::vector<YearBin> default_year_bins();

/// Parses "1984-1988,1989-1993,..." into bins.
std::vector<YearBin> parse_year_bins(const std::string& text);

struct GroupRow {
    std::vector<std::string> key;
    std::size_t n = 0;
    double mean_gap_1 = 0.0;
    double mean_gap_2 = 0.0;
};

/// Key names resolve to "us_division", "model_year_1/2", "model_year_bin_1/2"
/// (binned with `bins`), "garage_id", or any covariate column. Rows come out
/// sorted by key.
std::vector<GroupRow> group_summary(const std::vector<PairedGapObservation>& obs,
                                    const std::vector<std::string>& keys,
                                    const std::vector<YearBin>& bins = default_year_bins());

void write_group_summary_csv(std::ostream& out, const std::vector<std::string>& keys,
                             const std::vector<GroupRow>& rows);

}  // namespace fegap
