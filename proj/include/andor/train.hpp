#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

#include "andor/loss.hpp"

namespace andor {

/// A positive carries the boxes of one N-car sample; a background image
/// (no boxes) is a negative with label nullopt.
struct TrainingSample {
    int image = -1;
    BoxSet y;
    Supervision sup;  // used only by supervised training
};

struct TrainingData {
    std::vector<Image> images;
    std::vector<TrainingSample> positives;
    std::vector<int> backgrounds;  // image indices free of cars

    void check() const {
        for (const auto& s : positives) {
            ANDOR_REQUIRE(s.image >= 0 && s.image < static_cast<int>(images.size()), "sample image out of range");
            ANDOR_REQUIRE(s.y && !s.y->empty(), "positive sample without boxes");
            for (const Box& b : *s.y) ANDOR_REQUIRE(b.w > 0 && b.h > 0, "degenerate box in a positive sample");
        }
        for (int b : backgrounds)
            ANDOR_REQUIRE(b >= 0 && b < static_cast<int>(images.size()), "background image out of range");
    }
};

// ------ negative cache -------

struct NegativeEntry {
    FeatureVector phi;
    int image = -1;
    Position pos;
    double score = 0;
};

/// Bounded set of hard negatives. Entries are keyed by (image, root position);
/// when full, a new entry replaces the lowest-scoring one if it scores higher.
class NegativeCache {
public:
    explicit NegativeCache(std::size_t capacity = 2000) : capacity_(capacity) {}

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::vector<NegativeEntry>& entries() const { return entries_; }

    double min_score() const {
        double m = kInf;
        for (const auto& e : entries_) m = std::min(m, e.score);
        return m;
    }

    /// True when the window was not cached before.
    bool insert(NegativeEntry e) {
        for (auto& old : entries_)
            if (old.image == e.image && old.pos == e.pos) {
                old = std::move(e);
                return false;
            }
        if (entries_.size() < capacity_) {
            entries_.push_back(std::move(e));
            return true;
        }
        if (capacity_ == 0) return false;
        auto low = std::min_element(entries_.begin(), entries_.end(),
                                    [](const auto& a, const auto& b) { return a.score < b.score; });
        if (!(e.score > low->score)) return false;
        *low = std::move(e);
        return true;
    }

    void rescore(const std::vector<double>& theta) {
        for (auto& e : entries_) e.score = e.phi.dot(theta);
    }

    /// Entries grouped by source image, in insertion order.
    std::map<int, std::vector<const NegativeEntry*>> by_image() const {
        std::map<int, std::vector<const NegativeEntry*>> out;
        for (const auto& e : entries_) out[e.image].push_back(&e);
        return out;
    }

private:
    std::size_t capacity_;
    std::vector<NegativeEntry> entries_;
};

/// Root placements on a car-free image scoring above -margin, best first,
/// at most `per_image` of them. Ties keep scan order.
inline std::vector<NegativeEntry> hard_negatives(ScoreMaps& maps, int image, double margin, int per_image) {
    const AndOrGraph& g = maps.graph();
    std::vector<std::pair<double, Position>> hits;
    for (int l = 0; l < maps.num_levels(); ++l) {
        const ScoreGrid& m = maps.node_map(g.root, l);
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x)
                if (m(x, y) != kNegInf && m(x, y) > -margin) hits.push_back({m(x, y), {l, x, y}});
    }
    std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    if (per_image >= 0 && hits.size() > static_cast<std::size_t>(per_image)) hits.resize(static_cast<std::size_t>(per_image));
    std::vector<NegativeEntry> out;
    for (const auto& [s, p] : hits) {
        const ParseTree pt = maps.extract(g.root, p);
        out.push_back({parse_tree_features(g, maps.pyramid(), pt), image, p, s});
    }
    return out;
}

/// Detects on every background image and inserts what scores above -margin.
/// Returns the number of entries stored.
inline std::size_t mine_hard_negatives(const AndOrGraph& g, const TrainingData& data, double margin,
                                       NegativeCache& cache, int per_image = 10, int max_levels = 0,
                                       unsigned threads = default_threads()) {
    std::vector<std::vector<NegativeEntry>> found(data.backgrounds.size());
    parallel_for(
        data.backgrounds.size(),
        [&](std::size_t i) {
            const int im = data.backgrounds[i];
            const FeaturePyramid pyr = model_pyramid(g, data.images[static_cast<std::size_t>(im)], max_levels);
            if (pyr.num_levels() == 0) return;
            ScoreMaps maps = bottom_up(g, pyr, 1);
            found[i] = hard_negatives(maps, im, margin, per_image);
        },
        threads);
    std::size_t added = 0;
    for (auto& f : found)
        for (auto& e : f) added += cache.insert(std::move(e));
    return added;
}

// ------ cached convex problem -------

struct Candidate {
    FeatureVector phi;
    double loss = 0;
};

/// One outer iteration's convex upper bound restricted to cached parse trees:
///   1/2 |theta|^2 + C sum_i [max(1, max_c theta.phi_c + L_c) - theta.phi_i]
///                 + C sum_j max(0, max_w 1 + theta.phi_w)
/// where phi_i is the fixed completion of positive i (also one of its
/// candidates) and w ranges over the cached windows of background image j.
struct ConvexProblem {
    struct Positive {
        FeatureVector fixed;
        std::vector<Candidate> candidates;
    };
    std::vector<Positive> positives;
    std::vector<std::vector<FeatureVector>> negatives;
    double C = 0.002;
    double margin = 1.0;
    std::size_t dim = 0;

    std::size_t samples() const { return positives.size() + negatives.size(); }

    /// Hinge of sample k (positives first) and the feature vector of the
    /// maximiser (null for the background output); the fixed completion enters
    /// with a minus sign for positives.
    double hinge(std::size_t k, const std::vector<double>& theta, const FeatureVector** arg) const {
        *arg = nullptr;
        if (k < positives.size()) {
            const auto& p = positives[k];
            double top = margin;
            for (const auto& c : p.candidates) {
                const double v = c.phi.dot(theta) + c.loss;
                if (v > top) {
                    top = v;
                    *arg = &c.phi;
                }
            }
            return top - p.fixed.dot(theta);
        }
        double top = 0;
        for (const auto& w : negatives[k - positives.size()]) {
            const double v = margin + w.dot(theta);
            if (v > top) {
                top = v;
                *arg = &w;
            }
        }
        return top;
    }

    double loss_sum(const std::vector<double>& theta) const {
        double s = 0;
        const FeatureVector* a;
        for (std::size_t k = 0; k < samples(); ++k) s += hinge(k, theta, &a);
        return s;
    }

    double objective(const std::vector<double>& theta) const {
        double r = 0;
        for (double v : theta) r += v * v;
        return 0.5 * r + C * loss_sum(theta);
    }

    /// Subgradient of one sample's hinge term.
    void add_sample_subgradient(std::size_t k, const std::vector<double>& theta, std::vector<double>& g,
                                double scale) const {
        const FeatureVector* a;
        hinge(k, theta, &a);
        if (a) a->add_to(g, scale);
        if (k < positives.size()) positives[k].fixed.add_to(g, -scale);
    }

    std::vector<double> subgradient(const std::vector<double>& theta) const {
        std::vector<double> g = theta;
        for (std::size_t k = 0; k < samples(); ++k) add_sample_subgradient(k, theta, g, C);
        return g;
    }

    /// Mean squared norm of the cached feature vectors.
    double feature_scale() const {
        double s = 0;
        std::size_t n = 0;
        auto add = [&](const FeatureVector& f) {
            for (const auto& b : f.blocks)
                for (double v : b.values) s += v * v;
            ++n;
        };
        for (const auto& p : positives) add(p.fixed);
        for (const auto& ws : negatives)
            for (const auto& w : ws) add(w);
        return n == 0 || s == 0 ? 1.0 : s / static_cast<double>(n);
    }
};

struct TrainOptions {
    double C = 0.002;
    int epochs = 5;        // outer CCCP iterations
    int inner_epochs = 5;  // passes of stochastic subgradient over the cache
    double eta0 = 1.0;     // step size relative to C times the mean squared feature norm
    double t0 = 0;         // step decay constant, 0 for the number of cached samples
    double margin = 1.0;
    double tol = 1e-4;
    int max_retries = 3;   // re-solves after a rejected step, each with the violators found
    double divergence = 10.0;
    std::size_t cache_capacity = 2000;
    int negatives_per_image = 10;
    int candidates_per_positive = 3;
    int mining_rounds = 2;  // extra mine-and-resolve passes over the backgrounds per iteration
    int max_levels = 0;
    bool supervised = false;  // fix Or choices from each sample's supervision
    AugmentOptions augment;
    std::uint64_t seed = 1;
    unsigned threads = default_threads();
    std::ostream* log = nullptr;
};

struct IterationLog {
    int iteration = 0;
    double objective = 0;  // full-batch objective after the iteration
    double bound = 0;      // convex bound (old completions) at the last trial parameters
    double loss_sum = 0;   // sum of surrogate losses
    std::vector<double> inner;  // cached objective after each inner epoch
    std::vector<std::vector<double>> refits;  // the same for each re-solve on a grown cache
    std::size_t cache = 0;
    int completed = 0, skipped = 0;
    int retries = 0;
    bool accepted = true;
};

struct TrainResult {
    std::vector<double> theta;
    std::vector<IterationLog> log;
    double objective = 0;
    double loss_sum = 0;
    int skipped = 0;
};

/// Thrown when the objective grows past the divergence factor.
class DivergenceError : public Error {
public:
    using Error::Error;
};

namespace detail {

/// Everything one sweep over the data produces at fixed parameters.
struct Sweep {
    std::vector<char> feasible;
    std::vector<FeatureVector> completion;
    std::vector<double> completion_score;
    std::vector<double> margin_value;
    std::vector<std::optional<Candidate>> margin_arg;
    std::vector<double> neg_top;  // per background image: 1 + best root score, floored at 0
    std::vector<std::vector<NegativeEntry>> mined;
    double loss_sum = 0;
    double objective = 0;
    int skipped = 0;
};

inline double half_sq(const std::vector<double>& t) {
    double r = 0;
    for (double v : t) r += v * v;
    return 0.5 * r;
}

inline Sweep sweep(const AndOrGraph& g, const TrainingData& data, const TrainOptions& opt) {
    Sweep s;
    const std::size_t P = data.positives.size(), B = data.backgrounds.size();
    s.feasible.assign(P, 0);
    s.completion.resize(P);
    s.completion_score.assign(P, 0);
    s.margin_value.assign(P, 0);
    s.margin_arg.resize(P);
    s.neg_top.assign(B, 0);
    s.mined.resize(B);

    std::map<int, std::vector<std::size_t>> by_image;
    for (std::size_t i = 0; i < P; ++i) by_image[data.positives[i].image].push_back(i);
    std::vector<std::pair<int, std::vector<std::size_t>>> jobs(by_image.begin(), by_image.end());

    parallel_for(
        jobs.size() + B,
        [&](std::size_t j) {
            const int im = j < jobs.size() ? jobs[j].first : data.backgrounds[j - jobs.size()];
            const FeaturePyramid pyr = model_pyramid(g, data.images[static_cast<std::size_t>(im)], opt.max_levels);
            if (pyr.num_levels() == 0) return;
            ScoreMaps maps = bottom_up(g, pyr, 1);
            if (j >= jobs.size()) {
                const std::size_t b = j - jobs.size();
                double top = kNegInf;
                for (int l = 0; l < maps.num_levels(); ++l)
                    for (double v : maps.node_map(g.root, l).data) top = std::max(top, v);
                s.neg_top[b] = top == kNegInf ? 0.0 : std::max(0.0, opt.margin + top);
                s.mined[b] = hard_negatives(maps, im, opt.margin, opt.negatives_per_image);
                return;
            }
            for (std::size_t i : jobs[j].second) {
                const TrainingSample& smp = data.positives[i];
                const Supervision none;
                const Supervision& sup = opt.supervised ? smp.sup : none;
                const auto out = loss_adjusted_inference(maps, smp.y, LossMode::Output, sup, opt.augment);
                if (out.feasible) {
                    s.feasible[i] = 1;
                    s.completion[i] = parse_tree_features(g, pyr, out.pt);
                    s.completion_score[i] = out.score;
                }
                const auto mar = loss_adjusted_inference(maps, smp.y, LossMode::Margin, sup, opt.augment);
                s.margin_value[i] = mar.adjusted;
                if (!mar.background()) s.margin_arg[i] = Candidate{parse_tree_features(g, pyr, mar.pt), mar.loss};
            }
        },
        opt.threads);

    for (std::size_t i = 0; i < P; ++i) {
        if (!s.feasible[i]) {
            ++s.skipped;
            continue;
        }
        s.loss_sum += s.margin_value[i] - s.completion_score[i];
    }
    for (double v : s.neg_top) s.loss_sum += v;
    s.objective = half_sq(g.theta) + opt.C * s.loss_sum;
    return s;
}

}  // namespace detail

/// Stochastic subgradient descent on a cached convex problem, starting at
/// theta. An epoch that raises the full cached objective is undone and the
/// step halved, so the returned trace is non-increasing.
inline std::vector<double> convex_step(const AndOrGraph& g, const ConvexProblem& prob, std::vector<double> theta,
                                       const TrainOptions& opt, std::mt19937_64& rng, std::vector<double>* trace) {
    const std::size_t n = prob.samples();
    if (n == 0) return theta;
    const double f0 = prob.objective(theta);
    double f = f0;
    double eta0 = opt.eta0 / (std::max(prob.C, 1e-12) * prob.feature_scale());
    const double t0 = opt.t0 > 0 ? opt.t0 : static_cast<double>(n);
    double t = 0;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int e = 0; e < opt.inner_epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<double> trial = theta;
        std::vector<double> grad(theta.size());
        for (std::size_t k : order) {
            const double eta = eta0 / (1.0 + t / t0);
            t += 1;
            std::fill(grad.begin(), grad.end(), 0.0);
            prob.add_sample_subgradient(k, trial, grad, prob.C);
            const double shrink = 1.0 - eta / static_cast<double>(n);
            for (std::size_t d = 0; d < trial.size(); ++d) trial[d] = shrink * trial[d] - eta * grad[d];
            clamp_deformation(g, trial);
        }
        const double ft = prob.objective(trial);
        if (!std::isfinite(ft) || ft > opt.divergence * std::max(f0, 1e-12))
            throw DivergenceError("inner objective " + std::to_string(ft) + " exceeds " +
                                  std::to_string(opt.divergence) + "x its initial value " + std::to_string(f0));
        if (ft <= f) {
            theta = std::move(trial);
            f = ft;
        } else {
            eta0 *= 0.5;
        }
        if (trace) trace->push_back(f);
    }
    return theta;
}

/// Concave-convex training of the model parameters. Each outer iteration
/// fixes the completion of every positive (best output-mode parse), solves the
/// convex problem on cached candidates and hard negatives, then re-sweeps the
/// data. New parameters are accepted only if the full-data objective does not
/// exceed the previous one; the convex bound with the old completions is
/// logged alongside. A rejected step adds the placements and windows the
/// trial found to the cached problem and re-solves from the old parameters,
/// up to max_retries times, before training stops.
inline TrainResult wlssvm_train(AndOrGraph& g, const TrainingData& data, const TrainOptions& opt) {
    data.check();
    require_valid(g);
    ANDOR_REQUIRE(opt.C >= 0, "C must be non-negative");
    TrainResult res;
    if (opt.C == 0) {
        std::fill(g.theta.begin(), g.theta.end(), 0.0);
        clamp_deformation(g);
        res.theta = g.theta;
        return res;
    }
    clamp_deformation(g);
    std::mt19937_64 rng(opt.seed);
    NegativeCache cache(opt.cache_capacity);
    std::vector<std::vector<Candidate>> cands(data.positives.size());

    detail::Sweep cur = detail::sweep(g, data, opt);
    const double e0 = cur.objective;
    auto absorb = [&](detail::Sweep& s) {
        for (std::size_t i = 0; i < data.positives.size(); ++i) {
            if (!s.margin_arg[i]) continue;
            auto& c = cands[i];
            c.insert(c.begin(), std::move(*s.margin_arg[i]));
            if (c.size() > static_cast<std::size_t>(std::max(1, opt.candidates_per_positive)))
                c.resize(static_cast<std::size_t>(opt.candidates_per_positive));
        }
        cache.rescore(g.theta);
        for (auto& m : s.mined)
            for (auto& e : m) cache.insert(std::move(e));
        s.mined.clear();
    };
    absorb(cur);
    if (opt.log)
        *opt.log << "iter 0 objective " << std::setprecision(10) << cur.objective << " loss " << cur.loss_sum
                 << " cache " << cache.size() << " skipped " << cur.skipped << "\n";
    res.log.push_back({0, cur.objective, cur.objective, cur.loss_sum, {}, {}, cache.size(),
                       static_cast<int>(data.positives.size()) - cur.skipped, cur.skipped, 0, true});

    for (int it = 1; it <= opt.epochs; ++it) {
        ConvexProblem prob;
        prob.C = opt.C;
        prob.margin = opt.margin;
        prob.dim = g.theta.size();
        std::vector<std::size_t> used;
        for (std::size_t i = 0; i < data.positives.size(); ++i) {
            if (!cur.feasible[i]) continue;
            ConvexProblem::Positive p;
            p.fixed = cur.completion[i];
            p.candidates = cands[i];
            p.candidates.push_back({cur.completion[i], 0.0});
            prob.positives.push_back(std::move(p));
            used.push_back(i);
        }
        auto load_cache = [&] {
            prob.negatives.clear();
            for (const auto& [im, es] : cache.by_image()) {
                std::vector<FeatureVector> ws;
                for (const auto* e : es) ws.push_back(e->phi);
                prob.negatives.push_back(std::move(ws));
            }
        };
        load_cache();

        IterationLog lg;
        lg.iteration = it;
        const std::vector<double> old = g.theta;
        std::vector<double> next = convex_step(g, prob, old, opt, rng, &lg.inner);
        for (int r = 0; r < opt.mining_rounds; ++r) {
            g.theta = next;
            cache.rescore(g.theta);
            if (mine_hard_negatives(g, data, opt.margin, cache, opt.negatives_per_image, opt.max_levels, opt.threads) == 0)
                break;
            load_cache();
            lg.refits.emplace_back();
            next = convex_step(g, prob, next, opt, rng, &lg.refits.back());
        }
        g.theta = old;

        bool accepted = false;
        detail::Sweep trial;
        for (int k = 0;; ++k) {
            g.theta = next;
            trial = detail::sweep(g, data, opt);
            double bound_loss = 0;
            for (std::size_t i = 0; i < data.positives.size(); ++i)
                if (cur.feasible[i]) bound_loss += trial.margin_value[i] - cur.completion[i].dot(g.theta);
            for (double v : trial.neg_top) bound_loss += v;
            lg.bound = detail::half_sq(g.theta) + opt.C * bound_loss;
            if (opt.log)
                *opt.log << "  trial " << k << " objective " << std::setprecision(10) << trial.objective << " bound "
                         << lg.bound << "\n";
            if (trial.objective <= cur.objective + 1e-9 * std::max(1.0, std::abs(cur.objective))) {
                accepted = true;
                break;
            }
            if (k == opt.max_retries) break;
            // add the violators the trial found and solve again from the old parameters
            ++lg.retries;
            for (std::size_t u = 0; u < used.size(); ++u)
                if (trial.margin_arg[used[u]]) prob.positives[u].candidates.push_back(*trial.margin_arg[used[u]]);
            for (auto& m : trial.mined)
                for (auto& e : m) cache.insert(std::move(e));
            load_cache();
            lg.refits.emplace_back();
            next = convex_step(g, prob, old, opt, rng, &lg.refits.back());
        }
        if (!accepted) {
            g.theta = old;
            lg.accepted = false;
            lg.objective = cur.objective;
            lg.loss_sum = cur.loss_sum;
            lg.cache = cache.size();
            lg.completed = static_cast<int>(data.positives.size()) - cur.skipped;
            lg.skipped = cur.skipped;
            res.log.push_back(lg);
            if (opt.log) *opt.log << "iter " << it << " rejected after " << lg.retries << " retries\n";
            break;
        }
        const double prev = cur.objective;
        cur = std::move(trial);
        if (cur.objective > opt.divergence * std::max(e0, 1e-12))
            throw DivergenceError("objective " + std::to_string(cur.objective) + " exceeds " +
                                  std::to_string(opt.divergence) + "x the initial " + std::to_string(e0));
        absorb(cur);
        lg.objective = cur.objective;
        lg.loss_sum = cur.loss_sum;
        lg.cache = cache.size();
        lg.skipped = cur.skipped;
        lg.completed = static_cast<int>(data.positives.size()) - cur.skipped;
        res.log.push_back(lg);
        if (opt.log)
            *opt.log << "iter " << it << " objective " << std::setprecision(10) << cur.objective << " bound "
                     << lg.bound << " loss " << cur.loss_sum << " cache " << cache.size() << " completed "
                     << lg.completed << " skipped " << lg.skipped << " retries " << lg.retries << "\n";
        if (prev - cur.objective < opt.tol * std::abs(prev)) break;
    }
    res.theta = g.theta;
    res.objective = cur.objective;
    res.loss_sum = cur.loss_sum;
    res.skipped = cur.skipped;
    return res;
}

/// Step 0: training with every Or choice fixed by the samples' supervision in
/// both the completion and the margin term, so only placements and part
/// displacements stay latent.
inline TrainResult init_step0(AndOrGraph& g, const TrainingData& data, TrainOptions opt) {
    for (const auto& s : data.positives) {
        if (s.sup.pattern >= 0) {
            bool ok = false;
            for (NodeId n : g.nodes_with_role(NodeRole::Pattern)) ok = ok || g.node(n).pattern == s.sup.pattern;
            if (!ok) throw ContractError("supervision names pattern " + std::to_string(s.sup.pattern) + " missing from the model");
        }
        for (NodeId c : s.sup.cars)
            if (c < 0 || c >= static_cast<NodeId>(g.nodes.size()) || g.node(c).role != NodeRole::SingleCar)
                throw ContractError("supervision names a node that is not a single car");
        if (s.y && !s.sup.cars.empty() && s.sup.cars.size() != s.y->size())
            throw ContractError("supervision lists " + std::to_string(s.sup.cars.size()) + " cars for " +
                                std::to_string(s.y->size()) + " boxes");
    }
    opt.supervised = true;
    return wlssvm_train(g, data, opt);
}

}  // namespace andor
