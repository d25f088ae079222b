#include "semrsa/rdm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "semrsa/binary_format.hpp"
#include "semrsa/error.hpp"

namespace semrsa {

namespace {

constexpr const char* kModule = "rdm_core";

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw ValidationError(kModule, std::string(what) + " has a non-finite entry");
}

// Cosine of the angle given a dot product and two squared norms. The product
// form keeps identical inputs at exactly 1 (sqrt(x*x) == x in IEEE arithmetic).
inline double cosine_from(double dot, double aa, double bb) {
    double denom = std::sqrt(aa * bb);
    if (!std::isfinite(denom) || denom == 0.0) denom = std::sqrt(aa) * std::sqrt(bb);
    return dot / denom;
}

std::vector<ConditionId> default_ids(std::size_t n) {
    std::vector<ConditionId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
    return ids;
}

}  // namespace

std::string to_string(Metric m) { return m == Metric::cosine ? "cosine" : "correlation"; }

Metric parse_metric(const std::string& name) {
    if (name == "cosine") return Metric::cosine;
    if (name == "correlation") return Metric::correlation;
    throw ValidationError(kModule, "unknown metric '" + name + "'");
}

double cosine_distance(std::span<const double> a, std::span<const double> b, Diagnostics* diag) {
    if (a.size() != b.size() || a.empty())
        throw DimensionError(kModule, "cosine_distance needs equal non-empty lengths (got " +
                                          std::to_string(a.size()) + " and " + std::to_string(b.size()) + ")");
    require_finite(a, "cosine_distance input");
    require_finite(b, "cosine_distance input");
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) {
        flag(diag, Degeneracy::zero_norm_vector);
        return 1.0;
    }
    return std::clamp(1.0 - cosine_from(dot, aa, bb), 0.0, 2.0);
}

double pearson(std::span<const double> x, std::span<const double> y, Diagnostics* diag) {
    if (x.size() != y.size()) throw DimensionError(kModule, "pearson needs equal lengths");
    if (x.size() < 3) throw ValidationError(kModule, "pearson needs at least 3 elements");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        flag(diag, Degeneracy::constant_vector);
        return 0.0;
    }
    return std::clamp(cosine_from(sxy, sxx, syy), -1.0, 1.0);
}

Rdm::Rdm(RowMatrix values, std::vector<ConditionId> condition_ids)
    : values_(std::move(values)), ids_(std::move(condition_ids)) {
    const auto n = static_cast<std::size_t>(values_.rows());
    if (values_.rows() != values_.cols()) throw DimensionError(kModule, "RDM must be square");
    if (ids_.empty()) ids_ = default_ids(n);
    if (ids_.size() != n) throw DimensionError(kModule, "RDM condition id count does not match size");
    for (std::size_t i = 0; i < n; ++i) {
        if (values_(i, i) != 0.0) throw ValidationError(kModule, "RDM diagonal must be zero");
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!std::isfinite(values_(i, j))) throw ValidationError(kModule, "RDM has a non-finite entry");
            if (values_(i, j) != values_(j, i)) throw ValidationError(kModule, "RDM must be symmetric");
        }
    }
}

std::ptrdiff_t Rdm::find(const ConditionId& id) const {
    const auto it = std::find(ids_.begin(), ids_.end(), id);
    return it == ids_.end() ? -1 : std::distance(ids_.begin(), it);
}

Rdm Rdm::subset(std::span<const std::size_t> rows) const {
    const std::size_t m = rows.size();
    RowMatrix sub(m, m);
    std::vector<ConditionId> ids(m);
    for (std::size_t a = 0; a < m; ++a) {
        if (rows[a] >= size()) throw DimensionError(kModule, "RDM subset index out of range");
        ids[a] = ids_[rows[a]];
        for (std::size_t b = 0; b < m; ++b) sub(a, b) = values_(rows[a], rows[b]);
    }
    return Rdm(std::move(sub), std::move(ids));
}

void dissimilarity_utv(const RowMatrix& patterns, Metric metric, std::span<double> out, Diagnostics* diag) {
    const auto n = static_cast<std::size_t>(patterns.rows());
    if (out.size() != utv_length(n)) throw DimensionError(kModule, "UTV output has the wrong length");

    RowMatrix centered;
    const RowMatrix* rows = &patterns;
    if (metric == Metric::correlation) {
        centered = patterns.colwise() - patterns.rowwise().mean();
        rows = &centered;
    }
    const RowMatrix gram = (*rows) * rows->transpose();

    const Degeneracy degenerate =
        metric == Metric::cosine ? Degeneracy::zero_norm_vector : Degeneracy::constant_vector;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double aa = gram(i, i);
        for (std::size_t j = i + 1; j < n; ++j, ++k) {
            const double bb = gram(j, j);
            if (aa == 0.0 || bb == 0.0) {
                flag(diag, degenerate);
                out[k] = 1.0;
            } else {
                out[k] = std::clamp(1.0 - cosine_from(gram(i, j), aa, bb), 0.0, 2.0);
            }
        }
    }
}

Rdm build_rdm(const RowMatrix& patterns, Metric metric, std::vector<ConditionId> condition_ids,
              Diagnostics* diag) {
    const auto n = static_cast<std::size_t>(patterns.rows());
    if (n < 2) throw ValidationError(kModule, "build_rdm needs at least 2 patterns");
    if (patterns.cols() < 1) throw ValidationError(kModule, "build_rdm needs at least 1 feature");
    if (!patterns.allFinite()) throw ValidationError(kModule, "build_rdm input has a non-finite entry");
    Utv utv{n, std::vector<double>(utv_length(n))};
    dissimilarity_utv(patterns, metric, utv.values, diag);
    return utv_to_rdm(utv, std::move(condition_ids));
}

Utv rdm_to_utv(const Rdm& rdm) {
    const std::size_t n = rdm.size();
    Utv utv{n, {}};
    utv.values.reserve(utv_length(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) utv.values.push_back(rdm(i, j));
    return utv;
}

Rdm utv_to_rdm(const Utv& utv, std::vector<ConditionId> condition_ids) {
    const std::size_t n = utv.n;
    if (utv.values.size() != utv_length(n)) throw DimensionError(kModule, "UTV length must be n(n-1)/2");
    RowMatrix values = RowMatrix::Zero(n, n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j, ++k) {
            values(i, j) = utv.values[k];
            values(j, i) = utv.values[k];
        }
    return Rdm(std::move(values), std::move(condition_ids));
}

double compare_rdms(const Rdm& a, const Rdm& b, Diagnostics* diag) {
    if (a.size() != b.size()) throw DimensionError(kModule, "compared RDMs differ in size");
    const Utv ua = rdm_to_utv(a);
    const Utv ub = rdm_to_utv(b);
    return pearson(ua.values, ub.values, diag);
}

void write_rdm(const std::filesystem::path& path, const Rdm& rdm, Metric metric) {
    auto out = format::open_output(path, "RDM1");
    nlohmann::json header = {{"magic", "RDM1"},
                             {"n", rdm.size()},
                             {"metric", to_string(metric)},
                             {"condition_ids", rdm.condition_ids()}};
    format::write_header(out, header);
    format::write_f32(out, std::span<const double>(rdm_to_utv(rdm).values));
}

RdmFile read_rdm(const std::filesystem::path& path) {
    auto in = format::open_input(path, "RDM1");
    const auto header = format::read_header(in, "RDM1", path.string());
    const auto n = format::field<std::size_t>(header, "n", "RDM1");
    auto ids = format::field<std::vector<ConditionId>>(header, "condition_ids", "RDM1");
    const Metric metric = parse_metric(format::field<std::string>(header, "metric", "RDM1"));
    if (ids.size() != n) throw ValidationError(kModule, "RDM1 condition_ids length differs from n");
    const auto raw = format::read_f32(in, utv_length(n), "RDM1 " + path.string());
    Utv utv{n, std::vector<double>(raw.begin(), raw.end())};
    return {utv_to_rdm(utv, std::move(ids)), metric};
}

}  // namespace semrsa
