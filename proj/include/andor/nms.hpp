#pragma once

#include <numeric>

#include "andor/infer.hpp"

namespace andor {

/// A single-car box surviving suppression, traced to its source detection.
struct FinalBox {
    Box box;
    double score = 0;
    int view = -1;
    int config = -1;
    int pattern = -1;
    int detection = -1;  // index into the input list
    int car = -1;        // car index within that detection
    int image = -1;
};

struct NmsOptions {
    double iou = 0.5;
    /// Two cars from different multi-car detections at or above this IoU are the same car.
    double duplicate_iou = 0.7;
};

/// Multi-car guided suppression:
///  1. cars reported by several multi-car detections keep only the copy with the higher score;
///  2. greedy score-ordered NMS over the rest, where boxes of one detection never suppress each other.
inline std::vector<FinalBox> multi_car_nms(const std::vector<Detection>& dets, const NmsOptions& opt = {}) {
    std::vector<FinalBox> boxes;
    std::vector<bool> multi;
    for (std::size_t d = 0; d < dets.size(); ++d) {
        const auto cars = dets[d].cars();
        for (std::size_t c = 0; c < cars.size(); ++c) {
            boxes.push_back({cars[c].box, dets[d].score, cars[c].view, cars[c].config, dets[d].pattern,
                             static_cast<int>(d), static_cast<int>(c), dets[d].image});
            multi.push_back(cars.size() > 1);
        }
    }
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });

    std::vector<bool> alive(boxes.size(), true);
    std::vector<std::size_t> kept_multi;
    for (std::size_t i : order) {
        if (!multi[i]) continue;
        for (std::size_t k : kept_multi)
            if (boxes[k].image == boxes[i].image && boxes[k].detection != boxes[i].detection &&
                iou(boxes[k].box, boxes[i].box) >= opt.duplicate_iou) {
                alive[i] = false;
                break;
            }
        if (alive[i]) kept_multi.push_back(i);
    }

    std::vector<FinalBox> out;
    for (std::size_t i : order) {
        if (!alive[i]) continue;
        bool keep = true;
        for (const auto& k : out)
            if (k.image == boxes[i].image && k.detection != boxes[i].detection && iou(k.box, boxes[i].box) > opt.iou) {
                keep = false;
                break;
            }
        if (keep) out.push_back(boxes[i]);
    }
    return out;
}

}  // namespace andor
