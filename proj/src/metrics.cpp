#include "appraisal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "appraisal/csv.hpp"
#include "appraisal/errors.hpp"
#include "appraisal/text.hpp"

namespace appraisal {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) throw UsageError("prediction and gold lengths differ (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
    if (a == 0) throw UsageError("metrics need at least one example");
}

}  // namespace

Confusion confusion(const std::vector<bool>& pred, const std::vector<bool>& gold) {
    check_lengths(pred.size(), gold.size());
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i]) {
            (gold[i] ? c.tp : c.fp) += 1;
        } else {
            (gold[i] ? c.fn : c.tn) += 1;
        }
    }
    return c;
}

double accuracy(const std::vector<bool>& pred, const std::vector<bool>& gold) {
    const auto c = confusion(pred, gold);
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double f1_positive(const std::vector<bool>& pred, const std::vector<bool>& gold) {
    const auto c = confusion(pred, gold);
    if (c.tp == 0) return 0.0;
    // 2PR/(P+R) == 2tp / (2tp + fp + fn)
    return static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& gold) {
    check_lengths(scores.size(), gold.size());
    for (double s : scores) {
        if (std::isnan(s)) throw UsageError("roc_auc: NaN score");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::uint64_t n_pos = 0, n_neg = 0;
    for (bool g : gold) (g ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0) throw UsageError("roc_auc: gold labels contain a single class");

    // twice the U statistic, so ties stay integral
    unsigned __int128 twice_u = 0;
    std::uint64_t neg_below = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        std::uint64_t pos_here = 0, neg_here = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            (gold[order[j]] ? pos_here : neg_here) += 1;
            ++j;
        }
        twice_u += static_cast<unsigned __int128>(pos_here) * (2 * neg_below + neg_here);
        neg_below += neg_here;
        i = j;
    }
    const auto denominator = static_cast<unsigned __int128>(n_pos) * n_neg * 2;
    return static_cast<double>(twice_u) / static_cast<double>(denominator);
}

EvalResult evaluate(const std::vector<bool>& pred, const std::vector<double>& scores, const std::vector<bool>& gold) {
    EvalResult r;
    r.counts = confusion(pred, gold);
    r.accuracy = accuracy(pred, gold);
    r.f1_positive = f1_positive(pred, gold);
    const bool both = std::find(gold.begin(), gold.end(), true) != gold.end() &&
                      std::find(gold.begin(), gold.end(), false) != gold.end();
    if (both) r.auc = roc_auc(scores, gold);
    return r;
}

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
    out << "model,task,accuracy,auc,f1\n";
    for (const auto& row : rows) {
        csv::write_row(out, {row.model, row.task, format_fixed(row.result.accuracy, 4),
                             row.result.auc ? format_fixed(*row.result.auc, 4) : "NA",
                             format_fixed(row.result.f1_positive, 4)});
    }
}

}  // namespace appraisal
