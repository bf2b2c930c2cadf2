#pragma once

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "andor/nms.hpp"

namespace andor {

struct GroundTruth {
    int image = -1;
    Box box;
    int view = -1;
};

struct EvalOptions {
    double iou = 0.5;
    double min_height = 0;     // unmatched detections shorter than this are ignored
    bool eleven_point = false;
    int views = 0;             // view bins for MPPE and AVP, 0 to skip them
};

struct PRPoint {
    double recall = 0, precision = 0, score = 0;
};

struct EvalResult {
    std::vector<PRPoint> curve;
    double ap = 0;
    std::vector<std::vector<double>> confusion;  // row-normalised, gt view x predicted view
    std::vector<int> empty_views;                // rows left out of the MPPE mean
    double mppe = 0;
    double avp = 0;
    int tp = 0, fp = 0, missed = 0, ignored = 0;
    int gts = 0;
};

/// PASCAL interpolated AP of a precision/recall sequence ordered by
/// decreasing score: all-points integration, or the 11-point variant.
inline double interpolated_ap(const std::vector<PRPoint>& curve, bool eleven_point) {
    if (curve.empty()) return 0;
    if (eleven_point) {
        double ap = 0;
        for (int t = 0; t <= 10; ++t) {
            double p = 0;
            for (const auto& c : curve)
                if (c.recall >= t / 10.0 - 1e-12) p = std::max(p, c.precision);
            ap += p / 11.0;
        }
        return ap;
    }
    std::vector<double> rec{0.0}, prec{0.0};
    for (const auto& c : curve) {
        rec.push_back(c.recall);
        prec.push_back(c.precision);
    }
    rec.push_back(1.0);
    prec.push_back(0.0);
    for (std::size_t i = prec.size() - 1; i-- > 0;) prec[i] = std::max(prec[i], prec[i + 1]);
    double ap = 0;
    for (std::size_t i = 1; i < rec.size(); ++i) ap += (rec[i] - rec[i - 1]) * prec[i];
    return ap;
}

namespace detail {

enum class Outcome { TP, FP, Ignored };

/// Greedy score-ordered matching. A detection takes the best-overlapping
/// unmatched ground truth of its image that `accept` allows.
template <class Accept>
std::vector<Outcome> match(const std::vector<FinalBox>& dets, const std::vector<std::size_t>& order,
                           const std::vector<GroundTruth>& gts, const EvalOptions& opt, Accept accept,
                           std::vector<int>* matched_gt = nullptr) {
    std::vector<Outcome> out(dets.size(), Outcome::FP);
    std::vector<bool> used(gts.size(), false);
    if (matched_gt) matched_gt->assign(dets.size(), -1);
    for (std::size_t i : order) {
        const FinalBox& d = dets[i];
        double best = -1;
        int arg = -1;
        for (std::size_t k = 0; k < gts.size(); ++k) {
            if (used[k] || gts[k].image != d.image) continue;
            const double o = iou(d.box, gts[k].box);
            if (!accept(o, d, gts[k])) continue;
            if (o > best) {
                best = o;
                arg = static_cast<int>(k);
            }
        }
        if (arg >= 0) {
            used[static_cast<std::size_t>(arg)] = true;
            out[i] = Outcome::TP;
            if (matched_gt) (*matched_gt)[i] = arg;
            continue;
        }
        bool touches = false;
        for (const auto& g : gts)
            if (g.image == d.image && iou(d.box, g.box) >= opt.iou) touches = true;
        if (!touches && d.box.h < opt.min_height) out[i] = Outcome::Ignored;
    }
    return out;
}

inline std::vector<PRPoint> pr_curve(const std::vector<FinalBox>& dets, const std::vector<std::size_t>& order,
                                     const std::vector<Outcome>& oc, int npos) {
    std::vector<PRPoint> curve;
    int tp = 0, fp = 0;
    for (std::size_t i : order) {
        if (oc[i] == Outcome::Ignored) continue;
        (oc[i] == Outcome::TP ? tp : fp) += 1;
        curve.push_back({npos > 0 ? static_cast<double>(tp) / npos : 0.0, static_cast<double>(tp) / (tp + fp),
                         dets[i].score});
    }
    return curve;
}

inline std::vector<std::size_t> score_order(const std::vector<FinalBox>& dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    return order;
}

}  // namespace detail

/// AP at IoU >= opt.iou; duplicates are false positives.
inline EvalResult evaluate_ap(const std::vector<FinalBox>& dets, const std::vector<GroundTruth>& gts,
                              const EvalOptions& opt = {}) {
    EvalResult r;
    r.gts = static_cast<int>(gts.size());
    const auto order = detail::score_order(dets);
    const auto oc = detail::match(dets, order, gts, opt,
                                  [&](double o, const FinalBox&, const GroundTruth&) { return o >= opt.iou; });
    for (auto o : oc) {
        if (o == detail::Outcome::TP) ++r.tp;
        if (o == detail::Outcome::FP) ++r.fp;
        if (o == detail::Outcome::Ignored) ++r.ignored;
    }
    r.missed = r.gts - r.tp;
    r.curve = detail::pr_curve(dets, order, oc, r.gts);
    r.ap = r.gts > 0 ? interpolated_ap(r.curve, opt.eleven_point) : 0.0;
    return r;
}

/// Confusion of predicted against true view bins over matched pairs;
/// MPPE is the mean diagonal over the views that occur.
inline double evaluate_mppe(const std::vector<std::pair<int, int>>& gt_pred, int views,
                            std::vector<std::vector<double>>* confusion = nullptr, std::vector<int>* empty = nullptr) {
    ANDOR_REQUIRE(views >= 1, "MPPE needs at least one view bin");
    std::vector<std::vector<double>> m(static_cast<std::size_t>(views), std::vector<double>(static_cast<std::size_t>(views), 0));
    for (const auto& [t, p] : gt_pred) {
        ANDOR_REQUIRE(t >= 0 && t < views && p >= 0 && p < views, "view bin out of range");
        m[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] += 1;
    }
    double sum = 0;
    int rows = 0;
    if (empty) empty->clear();
    for (int v = 0; v < views; ++v) {
        auto& row = m[static_cast<std::size_t>(v)];
        const double n = std::accumulate(row.begin(), row.end(), 0.0);
        if (n == 0) {
            if (empty) empty->push_back(v);
            continue;
        }
        for (double& x : row) x /= n;
        sum += row[static_cast<std::size_t>(v)];
        ++rows;
    }
    if (confusion) *confusion = m;
    return rows > 0 ? sum / rows : 0.0;
}

/// AP where a true positive is a box match at IoU > 0.5 that also has the
/// right view bin. Boxes are matched as for AP at 0.5, so AVP never exceeds it.
inline double evaluate_avp(const std::vector<FinalBox>& dets, const std::vector<GroundTruth>& gts,
                           const EvalOptions& opt = {}) {
    if (gts.empty()) return 0;
    const auto order = detail::score_order(dets);
    EvalOptions half = opt;
    half.iou = 0.5;
    std::vector<int> gt_of;
    auto oc = detail::match(dets, order, gts, half,
                            [](double o, const FinalBox&, const GroundTruth&) { return o >= 0.5; }, &gt_of);
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (oc[i] != detail::Outcome::TP) continue;
        const auto& g = gts[static_cast<std::size_t>(gt_of[i])];
        if (!(iou(dets[i].box, g.box) > 0.5) || dets[i].view != g.view) oc[i] = detail::Outcome::FP;
    }
    return interpolated_ap(detail::pr_curve(dets, order, oc, static_cast<int>(gts.size())), opt.eleven_point);
}

/// AP, counts and curve; with opt.views > 0 also the view confusion over
/// matched detections, MPPE and AVP.
inline EvalResult evaluate(const std::vector<FinalBox>& dets, const std::vector<GroundTruth>& gts,
                           const EvalOptions& opt = {}) {
    EvalResult r = evaluate_ap(dets, gts, opt);
    if (opt.views <= 0) return r;
    const auto order = detail::score_order(dets);
    std::vector<int> gt_of;
    detail::match(dets, order, gts, opt, [&](double o, const FinalBox&, const GroundTruth&) { return o >= opt.iou; },
                  &gt_of);
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (gt_of[i] < 0) continue;
        const int t = gts[static_cast<std::size_t>(gt_of[i])].view;
        if (t >= 0 && dets[i].view >= 0) pairs.push_back({t, dets[i].view});
    }
    r.mppe = evaluate_mppe(pairs, opt.views, &r.confusion, &r.empty_views);
    r.avp = evaluate_avp(dets, gts, opt);
    return r;
}

inline void write_eval(std::ostream& out, const EvalResult& r) {
    out << "ap " << r.ap << "\n";
    out << "avp " << r.avp << "\n";
    out << "mppe " << r.mppe << "\n";
    out << "tp " << r.tp << "\nfp " << r.fp << "\nmissed " << r.missed << "\nignored " << r.ignored << "\n";
    out << "gts " << r.gts << "\n";
    out << "empty_views";
    for (int v : r.empty_views) out << " " << v;
    out << "\n";
    for (std::size_t t = 0; t < r.confusion.size(); ++t) {
        out << "confusion " << t;
        for (double x : r.confusion[t]) out << " " << x;
        out << "\n";
    }
}

/// Two columns: recall precision.
inline void write_pr_curve(const std::string& path, const EvalResult& r) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "# recall precision\n";
    for (const auto& p : r.curve) out << p.recall << " " << p.precision << "\n";
}

}  // namespace andor
