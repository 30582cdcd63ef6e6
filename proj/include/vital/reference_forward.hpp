#pragma once

// Cache-free, loop-by-loop transformer forward written independently of the
// library's ops; the oracle for the cached path.

#include <cmath>
#include <string>
#include <vector>

#include "vital/backbone.hpp"

namespace vital::reference {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
    Mat m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
    return m;
}

inline Mat matmul_t(const Mat& x, const Tensor& w) {  // x · wᵀ
    Mat y(x.size(), std::vector<double>(w.rows(), 0.0));
    for (std::size_t t = 0; t < x.size(); ++t)
        for (std::size_t o = 0; o < w.rows(); ++o) {
            long double s = 0.0;
            for (std::size_t i = 0; i < w.cols(); ++i) s += x[t][i] * w.at(o, i);
            y[t][o] = static_cast<double>(s);
        }
    return y;
}

inline Mat norm(const Mat& x, const Tensor& g, const Tensor& b) {
    Mat y = x;
    for (auto& row : y) {
        const double n = static_cast<double>(row.size());
        double mean = 0.0;
        for (double v : row) mean += v / n;
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean) / n;
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = (row[i] - mean) / std::sqrt(var + 1e-5) * g[i] + b[i];
    }
    return y;
}

inline Mat adapted(const Mat& x, const ParamStore& ps, const std::string& base, const std::string& lora,
                   double scaling) {
    Mat y = matmul_t(x, ps.get(base).value());
    if (!ps.contains(lora + ".A")) return y;
    Mat delta = matmul_t(matmul_t(x, ps.get(lora + ".A").value()), ps.get(lora + ".B").value());
    for (std::size_t t = 0; t < y.size(); ++t)
        for (std::size_t i = 0; i < y[t].size(); ++i) y[t][i] += scaling * delta[t][i];
    return y;
}

inline void rotate(Mat& x, std::size_t heads) {
    const std::size_t hd = x[0].size() / heads;
    for (std::size_t pos = 0; pos < x.size(); ++pos)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < hd / 2; ++i) {
                const double ang = static_cast<double>(pos) / std::pow(10000.0, 2.0 * i / static_cast<double>(hd));
                double& a = x[pos][h * hd + 2 * i];
                double& b = x[pos][h * hd + 2 * i + 1];
                const double na = a * std::cos(ang) - b * std::sin(ang);
                const double nb = a * std::sin(ang) + b * std::cos(ang);
                a = na;
                b = nb;
            }
}

// Hidden states of the backbone stack for the full sequence `x` (N × d).
inline Mat reference_stack(const Backbone& bb, const Mat& x) {
    const auto& cfg = bb.config();
    const auto& ps = bb.params();
    const double scaling = cfg.lora_alpha / static_cast<double>(cfg.lora_rank);
    const std::size_t H = cfg.n_heads, hd = cfg.d / H, N = x.size();
    Mat h = x;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "backbone.layers." + std::to_string(l) + ".";
        const std::string lp = "lora.layers." + std::to_string(l) + ".";
        Mat n1 = norm(h, ps.get(p + "ln1.gain").value(), ps.get(p + "ln1.bias").value());
        Mat q = adapted(n1, ps, p + "attn.wq", lp + "attn.wq", scaling);
        Mat k = adapted(n1, ps, p + "attn.wk", lp + "attn.wk", scaling);
        Mat v = adapted(n1, ps, p + "attn.wv", lp + "attn.wv", scaling);
        rotate(q, H);
        rotate(k, H);
        Mat att(N, std::vector<double>(cfg.d, 0.0));
        for (std::size_t t = 0; t < N; ++t)
            for (std::size_t hh = 0; hh < H; ++hh) {
                std::vector<double> s(t + 1);
                double mx = -1e300;
                for (std::size_t j = 0; j <= t; ++j) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < hd; ++c) acc += q[t][hh * hd + c] * k[j][hh * hd + c];
                    s[j] = acc / std::sqrt(static_cast<double>(hd));
                    mx = std::max(mx, s[j]);
                }
                double z = 0.0;
                for (double& e : s) z += (e = std::exp(e - mx));
                for (std::size_t j = 0; j <= t; ++j)
                    for (std::size_t c = 0; c < hd; ++c) att[t][hh * hd + c] += s[j] / z * v[j][hh * hd + c];
            }
        Mat o = adapted(att, ps, p + "attn.wo", lp + "attn.wo", scaling);
        for (std::size_t t = 0; t < N; ++t)
            for (std::size_t i = 0; i < cfg.d; ++i) h[t][i] += o[t][i];
        Mat n2 = norm(h, ps.get(p + "ln2.gain").value(), ps.get(p + "ln2.bias").value());
        Mat f = adapted(n2, ps, p + "ffn.w1", lp + "ffn.w1", scaling);
        for (auto& row : f)
            for (double& e : row) e = 0.5 * e * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (e + 0.044715 * e * e * e)));
        Mat f2 = adapted(f, ps, p + "ffn.w2", lp + "ffn.w2", scaling);
        for (std::size_t t = 0; t < N; ++t)
            for (std::size_t i = 0; i < cfg.d; ++i) h[t][i] += f2[t][i];
    }
    return norm(h, ps.get("backbone.final_norm.gain").value(), ps.get("backbone.final_norm.bias").value());
}

inline double max_abs_diff(const std::vector<double>& a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace vital::reference
