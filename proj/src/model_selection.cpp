#include "fegap/model_selection.hpp"

#include "fegap/errors.hpp"
#include "fegap/quasirandom.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <sstream>

namespace fegap {

namespace {

std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

template <typename Get>
std::string winner(const std::vector<RankedModel>& models, Get get) {
    const RankedModel* best = nullptr;
    for (const auto& m : models) {
        const std::optional<double> v = get(m.criteria);
        if (!v) continue;
        if (best == nullptr || *v < *get(best->criteria)) best = &m;
    }
    return best ? best->label : std::string();
}

}  // namespace

Criteria score_criteria(const CriteriaInput& in) {
    if (in.k <= 0 || in.n <= 0) throw std::invalid_argument("criteria need k > 0 and n > 0");
    const double dev = -2.0 * in.loglik;
    const double k = static_cast<double>(in.k);
    const double ln_n = std::log(static_cast<double>(in.n));
    Criteria c;
    c.aic = dev + 2.0 * k;
    c.caic = dev + k * (ln_n + 1.0);
    c.sbic = dev + k * ln_n;
    if (!in.fisher_inverse) {
        c.icomp_note = "no parameter covariance";
        return c;
    }
    const Eigen::MatrixXd& F = *in.fisher_inverse;
    if (F.rows() != in.k || F.cols() != in.k) {
        c.icomp_note = "parameter covariance is not k x k";
        return c;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (F + F.transpose()));
    if (llt.info() != Eigen::Success) {
        c.icomp_note = "parameter covariance is not positive definite";
        return c;
    }
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    c.icomp = dev + k * std::log(F.trace() / k) - log_det;
    return c;
}

CriteriaInput combine_independent(const CriteriaInput& a, const CriteriaInput& b) {
    CriteriaInput out;
    out.loglik = a.loglik + b.loglik;
    out.k = a.k + b.k;
    out.n = a.n;
    if (a.fisher_inverse && b.fisher_inverse) {
        Eigen::MatrixXd F = Eigen::MatrixXd::Zero(out.k, out.k);
        F.topLeftCorner(a.k, a.k) = *a.fisher_inverse;
        F.bottomRightCorner(b.k, b.k) = *b.fisher_inverse;
        out.fisher_inverse = std::move(F);
    }
    return out;
}

RankingTable rank_models(const std::vector<std::pair<std::string, CriteriaInput>>& fits) {
    if (fits.size() < 2) throw std::invalid_argument("ranking needs at least two models");
    RankingTable table;
    for (const auto& [label, input] : fits) table.models.push_back({label, input, score_criteria(input)});
    std::stable_sort(table.models.begin(), table.models.end(), [](const RankedModel& a, const RankedModel& b) {
        if (a.criteria.sbic != b.criteria.sbic) return a.criteria.sbic < b.criteria.sbic;
        if (a.input.k != b.input.k) return a.input.k < b.input.k;
        return a.label < b.label;
    });
    table.best_aic = winner(table.models, [](const Criteria& c) { return std::optional<double>(c.aic); });
    table.best_caic = winner(table.models, [](const Criteria& c) { return std::optional<double>(c.caic); });
    table.best_sbic = winner(table.models, [](const Criteria& c) { return std::optional<double>(c.sbic); });
    table.best_icomp = winner(table.models, [](const Criteria& c) { return c.icomp; });
    return table;
}

void write_criteria_csv(std::ostream& out, const RankingTable& t) {
    out << "label,n,k,loglik,AIC,CAIC,SBIC,ICOMP,winner\n";
    for (const auto& m : t.models) {
        std::string wins;
        auto mark = [&](const std::string& best, const char* tag) {
            if (best == m.label) wins += (wins.empty() ? "" : ";") + std::string(tag);
        };
        mark(t.best_aic, "AIC");
        mark(t.best_caic, "CAIC");
        mark(t.best_sbic, "SBIC");
        mark(t.best_icomp, "ICOMP");
        out << detail::csv_escape(m.label) << ',' << m.input.n << ',' << m.input.k << ',' << fixed4(m.input.loglik) << ','
            << fixed4(m.criteria.aic) << ',' << fixed4(m.criteria.caic) << ',' << fixed4(m.criteria.sbic) << ','
            << (m.criteria.icomp ? fixed4(*m.criteria.icomp) : std::string("NA")) << ',' << wins << '\n';
    }
}

void write_criteria_text(std::ostream& out, const RankingTable& t) {
    std::size_t label_w = 5;
    for (const auto& m : t.models) label_w = std::max(label_w, m.label.size());
    auto cell = [&](const std::string& s, std::size_t w) { out << std::setw(static_cast<int>(w)) << s << "  "; };
    out << std::left << std::setw(static_cast<int>(label_w)) << "label" << "  " << std::right;
    for (const char* h : {"n", "k"}) cell(h, 6);
    for (const char* h : {"loglik", "AIC", "CAIC", "SBIC", "ICOMP"}) cell(h, 14);
    out << '\n';
    for (const auto& m : t.models) {
        auto star = [&](const std::string& best, const std::string& v) { return v + (best == m.label ? "*" : " "); };
        out << std::left << std::setw(static_cast<int>(label_w)) << m.label << "  " << std::right;
        cell(std::to_string(m.input.n), 6);
        cell(std::to_string(m.input.k), 6);
        cell(fixed4(m.input.loglik) + " ", 14);
        cell(star(t.best_aic, fixed4(m.criteria.aic)), 14);
        cell(star(t.best_caic, fixed4(m.criteria.caic)), 14);
        cell(star(t.best_sbic, fixed4(m.criteria.sbic)), 14);
        cell(star(t.best_icomp, m.criteria.icomp ? fixed4(*m.criteria.icomp) : std::string("NA")), 14);
        out << '\n';
    }
    out << "* lowest value for the criterion\n";
}

RpEffectSummary rp_effect(const std::string& name, double mu, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("random coefficient '" + name + "' needs sigma > 0");
    RpEffectSummary s;
    s.name = name;
    s.mu = mu;
    s.sigma = sigma;
    s.share_above_zero = normal_cdf(mu / sigma);
    s.share_below_zero = 1.0 - s.share_above_zero;
    s.range_lower = mu - 2.0 * sigma;
    s.range_upper = mu + 2.0 * sigma;
    return s;
}

std::vector<RpEffectSummary> rp_effects(const RpSureFit& fit) {
    std::vector<RpEffectSummary> out;
    for (const auto& eq : fit.equations) {
        for (const auto& c : eq.coefficients) {
            if (c.random) out.push_back(rp_effect(eq.name + ":" + c.column, c.mu, c.sigma));
        }
    }
    if (out.empty()) throw SpecError("no random coefficients");
    return out;
}

void write_effects_csv(std::ostream& out, const std::vector<RpEffectSummary>& effects) {
    out << "name,mu,sigma,lower,upper,pct_above,pct_below\n";
    for (const auto& e : effects) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.4f,%.4f,%.2f,%.2f", e.mu, e.sigma, e.range_lower,
                      e.range_upper, 100.0 * e.share_above_zero, 100.0 * e.share_below_zero);
        out << detail::csv_escape(e.name) << ',' << buf << '\n';
    }
}

}  // namespace fegap
