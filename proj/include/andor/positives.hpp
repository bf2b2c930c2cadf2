#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "andor/common.hpp"

namespace andor {

/// Boxes annotated on one image. `views` is parallel to `boxes`; -1 = unknown.
struct Annotation {
    std::string image;
    std::vector<Box> boxes;
    std::vector<int> views;
};

using AnnotationSet = std::vector<Annotation>;

/// Annotation file: one line per box, `path x y w h [view]`. A line holding
/// only a path declares an image without cars. '#' starts a comment.
/// Images keep the order of their first appearance.
inline AnnotationSet read_annotations(std::istream& in) {
    AnnotationSet out;
    std::map<std::string, std::size_t> index;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream s(line);
        std::string path;
        if (!(s >> path)) continue;
        auto [it, fresh] = index.try_emplace(path, out.size());
        if (fresh) out.push_back({path, {}, {}});
        Annotation& a = out[it->second];
        std::vector<double> v;
        double x;
        while (s >> x) v.push_back(x);
        if (!s.eof()) throw ParseError("non-numeric field in annotation", line_no);
        if (v.empty()) continue;
        if (v.size() != 4 && v.size() != 5) throw ParseError("expected x y w h [view]", line_no);
        if (!(v[2] > 0) || !(v[3] > 0)) throw ParseError("box width and height must be positive", line_no);
        a.boxes.push_back({v[0], v[1], v[2], v[3]});
        a.views.push_back(v.size() == 5 ? static_cast<int>(v[4]) : -1);
    }
    return out;
}

inline AnnotationSet read_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open annotations " + path);
    return read_annotations(in);
}

inline void write_annotations(std::ostream& out, const AnnotationSet& set) {
    out.precision(10);
    for (const auto& a : set) {
        if (a.boxes.empty()) out << a.image << "\n";
        for (std::size_t j = 0; j < a.boxes.size(); ++j) {
            const Box& b = a.boxes[j];
            out << a.image << " " << b.x << " " << b.y << " " << b.w << " " << b.h;
            if (j < a.views.size() && a.views[j] >= 0) out << " " << a.views[j];
            out << "\n";
        }
    }
}

inline void write_annotations(const std::string& path, const AnnotationSet& set) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write annotations " + path);
    write_annotations(out, set);
}

/// Left-right mirror of an annotation on an image `width` pixels wide.
/// View bins over [0, 2pi) map b -> B-1-b.
inline Annotation mirror_annotation(const Annotation& a, double width, int views) {
    Annotation m = a;
    m.image = a.image + "#mirror";
    for (std::size_t j = 0; j < m.boxes.size(); ++j) {
        m.boxes[j].x = width - a.boxes[j].x - a.boxes[j].w;
        if (j < m.views.size() && m.views[j] >= 0) m.views[j] = views - 1 - m.views[j];
    }
    return m;
}

// ------ N-car positive sets -------

struct NCarSample {
    int image = -1;
    std::vector<int> members;  // box indices, left to right by centre x
    std::vector<Box> boxes;    // same order
};

namespace detail {

inline void order_left_to_right(const Annotation& a, std::vector<int>& j) {
    std::sort(j.begin(), j.end(), [&](int p, int q) {
        const Box &bp = a.boxes[static_cast<std::size_t>(p)], &bq = a.boxes[static_cast<std::size_t>(q)];
        if (bp.cx() != bq.cx()) return bp.cx() < bq.cx();
        if (bp.cy() != bq.cy()) return bp.cy() < bq.cy();
        return p < q;
    });
}

inline NCarSample make_sample(const Annotation& a, int image, std::vector<int> j) {
    order_left_to_right(a, j);
    NCarSample s{image, j, {}};
    for (int k : j) s.boxes.push_back(a.boxes[static_cast<std::size_t>(k)]);
    return s;
}

}  // namespace detail

/// Builds D+_1 .. D+_Nmax. Two boxes overlap when their intersection area
/// is positive. D+_1 holds boxes overlapping nothing; D+_2 pairs each box
/// with its largest-overlap neighbour; D+_N grows each (N-1)-sample by the
/// outside box with the largest intersection with the sample's union box.
/// Ties go to the smaller box index; duplicate index sets are skipped.
inline std::vector<std::vector<NCarSample>> gen_positive_sets(const AnnotationSet& set, int n_max) {
    ANDOR_REQUIRE(n_max >= 1, "N_max must be >= 1");
    std::vector<std::vector<NCarSample>> out(static_cast<std::size_t>(n_max));
    for (std::size_t i = 0; i < set.size(); ++i) {
        const Annotation& a = set[i];
        const int k = static_cast<int>(a.boxes.size());
        auto inter = [&](int p, int q) {
            return intersection_area(a.boxes[static_cast<std::size_t>(p)], a.boxes[static_cast<std::size_t>(q)]);
        };
        for (int j = 0; j < k; ++j) {
            bool alone = true;
            for (int q = 0; q < k && alone; ++q)
                if (q != j && inter(j, q) > 0) alone = false;
            if (alone) out[0].push_back(detail::make_sample(a, static_cast<int>(i), {j}));
        }
        if (n_max < 2 || k < 2) continue;
        std::vector<std::set<int>> prev;
        std::set<std::set<int>> seen;
        for (int j = 0; j < k; ++j) {
            int best = -1;
            double best_area = 0;
            for (int q = 0; q < k; ++q) {
                if (q == j) continue;
                const double ov = inter(j, q);
                if (ov > best_area) {
                    best_area = ov;
                    best = q;
                }
            }
            if (best < 0) continue;
            std::set<int> J{j, best};
            if (seen.insert(J).second) {
                prev.push_back(J);
                out[1].push_back(detail::make_sample(a, static_cast<int>(i), {J.begin(), J.end()}));
            }
        }
        for (int n = 3; n <= n_max && n <= k; ++n) {
            std::vector<std::set<int>> cur;
            std::set<std::set<int>> seen_n;
            for (const auto& K : prev) {
                std::vector<Box> members;
                for (int m : K) members.push_back(a.boxes[static_cast<std::size_t>(m)]);
                const Box u = union_box(members);
                int best = -1;
                double best_area = 0;
                for (int q = 0; q < k; ++q) {
                    if (K.count(q)) continue;
                    bool touches = false;
                    for (int m : K)
                        if (inter(m, q) > 0) touches = true;
                    if (!touches) continue;
                    const double ov = intersection_area(u, a.boxes[static_cast<std::size_t>(q)]);
                    if (ov > best_area) {
                        best_area = ov;
                        best = q;
                    }
                }
                if (best < 0) continue;
                std::set<int> J = K;
                J.insert(best);
                if (seen_n.insert(J).second) {
                    cur.push_back(J);
                    out[static_cast<std::size_t>(n - 1)].push_back(
                        detail::make_sample(a, static_cast<int>(i), {J.begin(), J.end()}));
                }
            }
            prev = std::move(cur);
        }
    }
    return out;
}

/// Layout feature of an N-car sample: centre offsets of cars 2..N from car 1,
/// divided by the union box width / height. Empty if the union is degenerate.
inline std::optional<std::vector<double>> layout_features(const std::vector<Box>& cars) {
    ANDOR_REQUIRE(cars.size() >= 2, "layout features need at least two cars");
    const Box u = union_box(cars);
    if (!(u.w > 0) || !(u.h > 0)) return std::nullopt;
    std::vector<double> f;
    for (std::size_t i = 1; i < cars.size(); ++i) {
        f.push_back((cars[i].cx() - cars[0].cx()) / u.w);
        f.push_back((cars[i].cy() - cars[0].cy()) / u.h);
    }
    return f;
}

inline std::optional<std::vector<double>> layout_features(const NCarSample& s) { return layout_features(s.boxes); }

}  // namespace andor
