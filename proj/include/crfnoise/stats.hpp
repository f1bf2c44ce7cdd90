#pragma once

#include "crfnoise/types.hpp"

namespace crfnoise {

// First and pairwise moments of (yhat, y, h) under some distribution; the
// currency of the positive and negative phases.
struct SuffStats {
    Vec e_yhat;   // C
    Vec e_y;      // N
    Vec e_h;      // H
    Mat e_yhat_y; // C x N
    Mat e_h_y;    // H x N

    static SuffStats zeros(const Dims& d) {
        SuffStats s;
        s.e_yhat = Vec::Zero(d.C);
        s.e_y = Vec::Zero(d.N);
        s.e_h = Vec::Zero(d.H);
        s.e_yhat_y = Mat::Zero(d.C, d.N);
        s.e_h_y = Mat::Zero(d.H, d.N);
        return s;
    }

    SuffStats& operator+=(const SuffStats& o) {
        e_yhat += o.e_yhat;
        e_y += o.e_y;
        e_h += o.e_h;
        e_yhat_y += o.e_yhat_y;
        e_h_y += o.e_h_y;
        return *this;
    }

    SuffStats& operator*=(double s) {
        e_yhat *= s;
        e_y *= s;
        e_h *= s;
        e_yhat_y *= s;
        e_h_y *= s;
        return *this;
    }
};

}  // namespace crfnoise
