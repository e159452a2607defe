#pragma once

#include "reprobe/models.hpp"
#include "reprobe/perturb.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace reprobe {

enum class Label : std::uint8_t { A = 0, B = 1, C = 2, D = 3 };

inline char label_char(Label l) { return static_cast<char>('A' + static_cast<int>(l)); }

inline Label label_from_string(std::string_view s) {
    if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'D') {
        return static_cast<Label>(s[0] - 'A');
    }
    throw DataError("label must be one of A, B, C, D; got '" + std::string(s) + "'");
}

// Mean teacher-forced probability of the kept tokens at their slots in the
// suite's target copy.
inline double tp(const ModelAdapter& adapter, const ProbeSuite& suite) {
    if (!same_vocab(adapter.vocab(), suite.copies.empty() ? suite.prefix.vocab()
                                                          : suite.copies.front().vocab())) {
        throw std::invalid_argument("tp: adapter vocab does not match suite vocab");
    }
    if (suite.kept_positions.empty()) {
        throw std::invalid_argument("tp: suite has no kept positions");
    }
    const TokenSeq context = suite.full_context();
    const auto positions = suite.target_positions();
    const auto probs = adapter.score(context, positions);
    double sum = 0.0;
    for (std::size_t p : positions) {
        sum += probs.at(p);
    }
    return sum / static_cast<double>(positions.size());
}

// TP values indexed by occurrence count, with mean and (population) standard
// deviation over per-sentence values.
struct ReinforcementCurve {
    std::vector<std::size_t> n_values;
    std::vector<double> mean_tp;
    std::vector<double> std_tp;
    std::size_t sample_count = 0;
};

// One probe family: per sentence, the nested suites for each n in n_values.
struct SuiteFamily {
    std::vector<std::size_t> n_values;
    std::vector<std::vector<ProbeSuite>> per_sentence; // [sentence][n index]
};

struct CancelToken {
    std::atomic<bool> cancelled{false};
    void cancel() noexcept { cancelled.store(true); }
    bool is_cancelled() const noexcept { return cancelled.load(); }
};

struct Cancelled : std::runtime_error {
    Cancelled() : std::runtime_error("cancelled") {}
};

// Matrix of per-(sentence, n) TP values. Sentences fan out over up to
// `parallelism` threads (bounded by the adapter's own limit); cells are
// written into a preallocated matrix so the reduction order is fixed.
inline std::vector<std::vector<double>> tp_matrix(const ModelAdapter& adapter, const SuiteFamily& family,
                                                  unsigned parallelism = 1,
                                                  const CancelToken* cancel = nullptr) {
    if (family.per_sentence.empty()) {
        throw std::invalid_argument("tp_matrix: empty suite family");
    }
    for (const auto& row : family.per_sentence) {
        if (row.size() != family.n_values.size()) {
            throw std::invalid_argument("tp_matrix: ragged suite family");
        }
    }
    const std::size_t sentences = family.per_sentence.size();
    const std::size_t points = family.n_values.size();
    std::vector<std::vector<double>> values(sentences, std::vector<double>(points, 0.0));

    const unsigned workers =
        std::max(1u, std::min({parallelism, adapter.max_parallel_scores(),
                               static_cast<unsigned>(sentences)}));
    auto work = [&](unsigned worker) {
        for (std::size_t s = worker; s < sentences; s += workers) {
            if (cancel && cancel->is_cancelled()) return;
            for (std::size_t i = 0; i < points; ++i) {
                values[s][i] = tp(adapter, family.per_sentence[s][i]);
            }
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            threads.emplace_back(work, w);
        }
        for (auto& t : threads) t.join();
    }
    if (cancel && cancel->is_cancelled()) {
        throw Cancelled();
    }
    return values;
}

inline ReinforcementCurve curve_from_matrix(const std::vector<std::size_t>& n_values,
                                            const std::vector<std::vector<double>>& values) {
    ReinforcementCurve curve;
    curve.n_values = n_values;
    curve.sample_count = values.size();
    const std::size_t points = n_values.size();
    curve.mean_tp.resize(points);
    curve.std_tp.resize(points);
    for (std::size_t i = 0; i < points; ++i) {
        double sum = 0.0;
        for (const auto& row : values) sum += row[i];
        const double mean = sum / static_cast<double>(values.size());
        double var = 0.0;
        for (const auto& row : values) {
            const double d = row[i] - mean;
            var += d * d;
        }
        curve.mean_tp[i] = mean;
        curve.std_tp[i] = std::sqrt(var / static_cast<double>(values.size()));
    }
    return curve;
}

inline ReinforcementCurve curve(const ModelAdapter& adapter, const SuiteFamily& family,
                                unsigned parallelism = 1, const CancelToken* cancel = nullptr) {
    return curve_from_matrix(family.n_values, tp_matrix(adapter, family, parallelism, cancel));
}

// Fraction of paired samples whose reinforced TP strictly exceeds the
// first-occurrence baseline.
inline double improved_ratio(std::span<const double> tp_n, std::span<const double> tp_baseline) {
    if (tp_n.size() != tp_baseline.size()) {
        throw std::invalid_argument("improved_ratio: length mismatch");
    }
    if (tp_n.empty()) {
        throw std::invalid_argument("improved_ratio: empty samples");
    }
    std::size_t improved = 0;
    for (std::size_t i = 0; i < tp_n.size(); ++i) {
        if (tp_n[i] > tp_baseline[i]) ++improved;
    }
    return static_cast<double>(improved) / static_cast<double>(tp_n.size());
}

// Sum of next-token probabilities of the given single-token labels.
inline double label_space_probability(const ModelAdapter& adapter, const TokenSeq& context,
                                      std::span<const TokenId> labels) {
    const auto dist = adapter.next_dist(context);
    double sum = 0.0;
    for (TokenId l : labels) {
        if (l >= dist.size()) {
            throw std::invalid_argument("label_space_probability: label id out of range");
        }
        sum += dist[l];
    }
    return sum;
}

struct ClassAccuracyTable {
    double acc[4] = {0, 0, 0, 0}; // indexed by Label
    double avg_abc = 0.0;
    double overall = 0.0;

    double accuracy(Label l) const { return acc[static_cast<int>(l)]; }
};

inline ClassAccuracyTable class_accuracy(const std::vector<std::pair<Label, Label>>& gold_pred) {
    std::size_t total[4] = {0, 0, 0, 0};
    std::size_t correct[4] = {0, 0, 0, 0};
    for (const auto& [gold, pred] : gold_pred) {
        const int g = static_cast<int>(gold);
        ++total[g];
        if (gold == pred) ++correct[g];
    }
    ClassAccuracyTable table;
    for (int c = 0; c < 4; ++c) {
        if (total[c] == 0) {
            throw std::invalid_argument(std::string("class_accuracy: no samples with gold label ") +
                                        label_char(static_cast<Label>(c)));
        }
        table.acc[c] = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    }
    table.avg_abc = (table.acc[0] + table.acc[1] + table.acc[2]) / 3.0;
    table.overall = (table.acc[0] + table.acc[1] + table.acc[2] + table.acc[3]) / 4.0;
    return table;
}

namespace detail {

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction,
// accurate to ~1e-15 for the t-test's (nu/2, 1/2) arguments.
inline double betacf(double a, double b, double x) {
    constexpr int max_iter = 500;
    constexpr double eps = 3.0e-16;
    constexpr double fpmin = 1.0e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

inline double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

} // namespace detail

// Two-sided p for Student's t with dof degrees of freedom:
// p = I_{dof/(dof+t^2)}(dof/2, 1/2).
inline double student_t_two_sided_p(double t, double dof) {
    if (std::isinf(t)) return 0.0;
    if (t == 0.0) return 1.0;
    const double x = dof / (dof + t * t);
    return detail::incbeta(dof / 2.0, 0.5, x);
}

struct PairedTTestResult {
    double t_statistic = 0.0;
    double p_value = 1.0;
    int folds = 0;
    bool significant = false; // p < 0.05
};

// Standard paired t with folds-1 degrees of freedom over per-fold accuracies.
// Degenerate cases by convention: zero-variance, zero-mean differences give
// p = 1; zero-variance, nonzero-mean give t = +/-inf and p = 0.
inline PairedTTestResult paired_ttest(std::span<const double> baseline_by_fold,
                                      std::span<const double> treated_by_fold) {
    if (baseline_by_fold.size() != treated_by_fold.size()) {
        throw std::invalid_argument("paired_ttest: fold count mismatch");
    }
    const std::size_t n = baseline_by_fold.size();
    if (n < 2) {
        throw std::invalid_argument("paired_ttest: need at least 2 folds");
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean += treated_by_fold[i] - baseline_by_fold[i];
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (treated_by_fold[i] - baseline_by_fold[i]) - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));

    PairedTTestResult result;
    result.folds = static_cast<int>(n);
    if (sd == 0.0) {
        if (mean == 0.0) {
            result.t_statistic = 0.0;
            result.p_value = 1.0;
        } else {
            result.t_statistic = mean > 0 ? std::numeric_limits<double>::infinity()
                                          : -std::numeric_limits<double>::infinity();
            result.p_value = 0.0;
        }
    } else {
        result.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
        result.p_value = student_t_two_sided_p(result.t_statistic, static_cast<double>(n - 1));
    }
    result.significant = result.p_value < 0.05;
    return result;
}

namespace detail {

// Shortest round-trip decimal form, so CSV parse reconstructs the exact double.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) {
        throw std::runtime_error("format_double failed");
    }
    return std::string(buf, end);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw DataError("bad float field '" + std::string(s) + "'");
    }
    return v;
}

} // namespace detail

inline std::string curve_to_csv(const ReinforcementCurve& curve) {
    std::string out = "n,mean,std,samples\n";
    for (std::size_t i = 0; i < curve.n_values.size(); ++i) {
        out += std::to_string(curve.n_values[i]);
        out += ',';
        out += detail::format_double(curve.mean_tp[i]);
        out += ',';
        out += detail::format_double(curve.std_tp[i]);
        out += ',';
        out += std::to_string(curve.sample_count);
        out += '\n';
    }
    return out;
}

inline ReinforcementCurve curve_from_csv(std::string_view csv) {
    std::istringstream in{std::string(csv)};
    std::string line;
    if (!std::getline(in, line) || line != "n,mean,std,samples") {
        throw DataError("curve csv: bad header");
    }
    ReinforcementCurve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<std::string, 4> fields;
        std::size_t field = 0, start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                if (field >= 4) throw DataError("curve csv: too many fields");
                fields[field++] = line.substr(start, i - start);
                start = i + 1;
            }
        }
        if (field != 4) throw DataError("curve csv: expected 4 fields");
        curve.n_values.push_back(static_cast<std::size_t>(std::stoull(fields[0])));
        curve.mean_tp.push_back(detail::parse_double(fields[1]));
        curve.std_tp.push_back(detail::parse_double(fields[2]));
        curve.sample_count = static_cast<std::size_t>(std::stoull(fields[3]));
    }
    return curve;
}

} // namespace reprobe
