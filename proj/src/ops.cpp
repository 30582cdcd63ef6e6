#include "vital/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vital {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw ShapeError(what);
}

struct LnStats {
    std::vector<double> mean;
    std::vector<double> inv_std;
};

// Two statistics per row; also returns x̂ in `xhat`.
LnStats layer_norm_core(const Tensor& x, double eps, Tensor& xhat) {
    const std::size_t T = x.rows(), n = x.cols();
    LnStats st{std::vector<double>(T), std::vector<double>(T)};
    xhat = Tensor(T, n);
    for (std::size_t t = 0; t < T; ++t) {
        auto r = x.row(t);
        double mu = 0.0;
        for (double v : r) mu += v;
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (double v : r) var += (v - mu) * (v - mu);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        st.mean[t] = mu;
        st.inv_std[t] = inv;
        for (std::size_t i = 0; i < n; ++i) xhat.at(t, i) = (r[i] - mu) * inv;
    }
    return st;
}

double gelu_grad(double x) {
    const double inner = kGeluSqrt2OverPi * (x + kGeluCubic * x * x * x);
    const double t = std::tanh(inner);
    const double dinner = kGeluSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

double rope_theta(std::size_t pos, std::size_t pair, std::size_t head_dim) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(pair) / static_cast<double>(head_dim));
    return static_cast<double>(pos) * freq;
}

Tensor rope_apply(const Tensor& x, std::size_t n_heads, std::size_t pos0, double sign) {
    const std::size_t d = x.cols();
    const std::size_t hd = d / n_heads;
    Tensor out(x.rows(), d);
    for (std::size_t t = 0; t < x.rows(); ++t) {
        for (std::size_t h = 0; h < n_heads; ++h) {
            for (std::size_t i = 0; i < hd / 2; ++i) {
                const double th = sign * rope_theta(pos0 + t, i, hd);
                const double c = std::cos(th), s = std::sin(th);
                const std::size_t a = h * hd + 2 * i, b = a + 1;
                const double xa = x.at(t, a), xb = x.at(t, b);
                out.at(t, a) = xa * c - xb * s;
                out.at(t, b) = xa * s + xb * c;
            }
        }
    }
    return out;
}

}  // namespace

namespace kernels {

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (gain.size() != x.cols() || bias.size() != x.cols()) throw ShapeError("layer_norm affine length mismatch");
    if (!(eps > 0.0)) throw ArgumentError("layer_norm eps must be positive");
    Tensor xhat;
    layer_norm_core(x, eps, xhat);
    Tensor out(x.rows(), x.cols());
    for (std::size_t t = 0; t < x.rows(); ++t)
        for (std::size_t i = 0; i < x.cols(); ++i) out.at(t, i) = gain[i] * xhat.at(t, i) + bias[i];
    out.apply_precision();
    return out;
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluSqrt2OverPi * (x + kGeluCubic * x * x * x)));
}

Tensor gelu(const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
    out.apply_precision();
    return out;
}

Tensor l2_normalize(const Tensor& x, double floor) {
    const double n = l2_norm(x.values());
    if (!(n > floor)) throw DegenerateVectorError("norm " + std::to_string(n) + " below floor");
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / n;
    return out;
}

Tensor softmax_row(std::span<const double> logits) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) mx = std::max(mx, v);
    Tensor p(1, logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) p[i] /= z;
    return p;
}

double cross_entropy(const Tensor& logits, std::span<const int> targets, std::span<const char> mask) {
    if (targets.size() != logits.rows() || mask.size() != logits.rows())
        throw ShapeError("cross_entropy targets/mask length must equal row count");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < logits.rows(); ++t) {
        if (!mask[t]) continue;
        const int y = targets[t];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) throw ShapeError("target outside vocab");
        auto r = logits.row(t);
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : r) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : r) z += std::exp(v - mx);
        total += -(r[static_cast<std::size_t>(y)] - mx - std::log(z));
        ++count;
    }
    if (count == 0) throw EmptyLossError("cross_entropy with every position masked");
    return total / static_cast<double>(count);
}

double l1_loss(const Tensor& pred, const Tensor& target) {
    if (pred.size() != target.size()) throw ShapeError("l1_loss length mismatch");
    if (pred.size() == 0) throw EmptyLossError("l1_loss of empty vectors");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
    return s / static_cast<double>(pred.size());
}

}  // namespace kernels

namespace ops {

Var linear(const Var& x, const Var& w) {
    const Tensor& X = x.value();
    const Tensor& W = w.value();
    require(X.cols() == W.cols(), "linear: input width does not match weight columns");
    const std::size_t T = X.rows(), n = X.cols(), m = W.rows();
    Tensor Y(T, m);
    for (std::size_t t = 0; t < T; ++t) {
        const double* xr = X.row(t).data();
        for (std::size_t i = 0; i < m; ++i) {
            const double* wr = W.row(i).data();
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += xr[j] * wr[j];
            Y.at(t, i) = s;
        }
    }
    return make_result(std::move(Y), {x, w}, [T, n, m](Node& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        const Tensor& dY = self.grad;
        if (xn.requires_grad) {
            Tensor& dX = xn.grad_buffer();
            for (std::size_t t = 0; t < T; ++t) {
                double* dx = dX.row(t).data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double g = dY.at(t, i);
                    if (g == 0.0) continue;
                    const double* wr = wn.value.row(i).data();
                    for (std::size_t j = 0; j < n; ++j) dx[j] += g * wr[j];
                }
            }
        }
        if (wn.requires_grad) {
            Tensor& dW = wn.grad_buffer();
            for (std::size_t t = 0; t < T; ++t) {
                const double* xr = xn.value.row(t).data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double g = dY.at(t, i);
                    if (g == 0.0) continue;
                    double* dw = dW.row(i).data();
                    for (std::size_t j = 0; j < n; ++j) dw[j] += g * xr[j];
                }
            }
        }
    });
}

Var add(const Var& a, const Var& b) {
    require(a.value().same_shape(b.value()), "add: shape mismatch");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            Tensor& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Var add_row(const Var& a, const Var& row) {
    require(row.value().size() == a.cols(), "add_row: width mismatch");
    Tensor out = a.value();
    for (std::size_t t = 0; t < out.rows(); ++t)
        for (std::size_t i = 0; i < out.cols(); ++i) out.at(t, i) += row.value()[i];
    return make_result(std::move(out), {a, row}, [](Node& self) {
        auto& an = *self.parents[0];
        auto& rn = *self.parents[1];
        if (an.requires_grad) {
            Tensor& g = an.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (rn.requires_grad) {
            Tensor& g = rn.grad_buffer();
            const std::size_t n = self.grad.cols();
            for (std::size_t t = 0; t < self.grad.rows(); ++t)
                for (std::size_t i = 0; i < n; ++i) g[i] += self.grad.at(t, i);
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (auto& v : out.values()) v *= s;
    return make_result(std::move(out), {a}, [s](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    });
}

Var gelu(const Var& x) {
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = kernels::gelu(x.value()[i]);
    return make_result(std::move(out), {x}, [](Node& self) {
        auto& xn = *self.parents[0];
        Tensor& g = xn.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * gelu_grad(xn.value[i]);
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const std::size_t n = x.cols();
    if (gain.value().size() != n || bias.value().size() != n) throw ShapeError("layer_norm affine length mismatch");
    if (!(eps > 0.0)) throw ArgumentError("layer_norm eps must be positive");
    Tensor xhat;
    LnStats st = layer_norm_core(x.value(), eps, xhat);
    Tensor out(x.rows(), n);
    for (std::size_t t = 0; t < x.rows(); ++t)
        for (std::size_t i = 0; i < n; ++i)
            out.at(t, i) = gain.value()[i] * xhat.at(t, i) + bias.value()[i];
    return make_result(std::move(out), {x, gain, bias},
                       [xhat = std::move(xhat), inv = std::move(st.inv_std), n](Node& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const Tensor& dy = self.grad;
        const std::size_t T = dy.rows();
        if (gn.requires_grad) {
            Tensor& g = gn.grad_buffer();
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t i = 0; i < n; ++i) g[i] += dy.at(t, i) * xhat.at(t, i);
        }
        if (bn.requires_grad) {
            Tensor& g = bn.grad_buffer();
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t i = 0; i < n; ++i) g[i] += dy.at(t, i);
        }
        if (xn.requires_grad) {
            Tensor& g = xn.grad_buffer();
            std::vector<double> dxh(n);
            for (std::size_t t = 0; t < T; ++t) {
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    dxh[i] = dy.at(t, i) * gn.value[i];
                    m1 += dxh[i];
                    m2 += dxh[i] * xhat.at(t, i);
                }
                m1 /= static_cast<double>(n);
                m2 /= static_cast<double>(n);
                for (std::size_t i = 0; i < n; ++i)
                    g.at(t, i) += inv[t] * (dxh[i] - m1 - xhat.at(t, i) * m2);
            }
        }
    });
}

Var rope(const Var& x, std::size_t n_heads, std::size_t pos0) {
    require(n_heads > 0 && x.cols() % n_heads == 0 && (x.cols() / n_heads) % 2 == 0,
            "rope: head dim must be even and divide the width");
    Tensor out = rope_apply(x.value(), n_heads, pos0, 1.0);
    return make_result(std::move(out), {x}, [n_heads, pos0](Node& self) {
        Tensor back = rope_apply(self.grad, n_heads, pos0, -1.0);
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
    });
}

Var attention(const Var& q, std::span<const Var> key_blocks, std::span<const Var> value_blocks,
              std::size_t n_heads, std::size_t q_pos0) {
    require(key_blocks.size() == value_blocks.size() && !key_blocks.empty(), "attention: block mismatch");
    const std::size_t d = q.cols();
    require(n_heads > 0 && d % n_heads == 0, "attention: heads must divide width");
    const std::size_t hd = d / n_heads;
    // Row offsets of each block inside the concatenated key sequence.
    std::vector<std::size_t> offsets;
    std::size_t N = 0;
    for (std::size_t b = 0; b < key_blocks.size(); ++b) {
        require(key_blocks[b].cols() == d && value_blocks[b].cols() == d, "attention: key width");
        require(key_blocks[b].rows() == value_blocks[b].rows(), "attention: key/value rows");
        offsets.push_back(N);
        N += key_blocks[b].rows();
    }
    const std::size_t T = q.rows();
    require(q_pos0 + T <= N, "attention: query positions beyond cached keys");

    std::vector<const double*> krow(N), vrow(N);
    for (std::size_t b = 0; b < key_blocks.size(); ++b)
        for (std::size_t r = 0; r < key_blocks[b].rows(); ++r) {
            krow[offsets[b] + r] = key_blocks[b].value().row(r).data();
            vrow[offsets[b] + r] = value_blocks[b].value().row(r).data();
        }

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    // probs[(t * n_heads + h)] holds the softmax over positions 0..q_pos0+t.
    std::vector<std::vector<double>> probs(T * n_heads);
    Tensor out(T, d);
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t visible = q_pos0 + t + 1;
        const double* qr = q.value().row(t).data();
        for (std::size_t h = 0; h < n_heads; ++h) {
            auto& p = probs[t * n_heads + h];
            p.resize(visible);
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < visible; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < hd; ++c) s += qr[h * hd + c] * krow[j][h * hd + c];
                p[j] = s * inv_sqrt;
                mx = std::max(mx, p[j]);
            }
            double z = 0.0;
            for (auto& v : p) {
                v = std::exp(v - mx);
                z += v;
            }
            for (auto& v : p) v /= z;
            for (std::size_t j = 0; j < visible; ++j)
                for (std::size_t c = 0; c < hd; ++c) out.at(t, h * hd + c) += p[j] * vrow[j][h * hd + c];
        }
    }

    std::vector<Var> parents;
    parents.reserve(1 + 2 * key_blocks.size());
    parents.push_back(q);
    for (const auto& k : key_blocks) parents.push_back(k);
    for (const auto& v : value_blocks) parents.push_back(v);
    const std::size_t nb = key_blocks.size();
    return make_result(std::move(out), std::move(parents),
                       [probs = std::move(probs), offsets = std::move(offsets), T, N, n_heads, hd, nb,
                        q_pos0, inv_sqrt](Node& self) {
        auto& qn = *self.parents[0];
        // Locate block and local row for a global key index.
        auto locate = [&](std::size_t j) {
            std::size_t b = static_cast<std::size_t>(
                std::upper_bound(offsets.begin(), offsets.end(), j) - offsets.begin() - 1);
            return std::pair{b, j - offsets[b]};
        };
        std::vector<const double*> krow(N), vrow(N);
        std::vector<double*> dk(N, nullptr), dv(N, nullptr);
        for (std::size_t j = 0; j < N; ++j) {
            auto [b, r] = locate(j);
            Node& kn = *self.parents[1 + b];
            Node& vn = *self.parents[1 + nb + b];
            krow[j] = kn.value.row(r).data();
            vrow[j] = vn.value.row(r).data();
            if (kn.requires_grad) dk[j] = kn.grad_buffer().row(r).data();
            if (vn.requires_grad) dv[j] = vn.grad_buffer().row(r).data();
        }
        double* dq_base = qn.requires_grad ? qn.grad_buffer().values().data() : nullptr;
        const std::size_t d = n_heads * hd;
        std::vector<double> dp;
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t visible = q_pos0 + t + 1;
            const double* qr = qn.value.row(t).data();
            const double* go = self.grad.row(t).data();
            for (std::size_t h = 0; h < n_heads; ++h) {
                const auto& p = probs[t * n_heads + h];
                dp.assign(visible, 0.0);
                double pdp = 0.0;
                for (std::size_t j = 0; j < visible; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < hd; ++c) s += go[h * hd + c] * vrow[j][h * hd + c];
                    dp[j] = s;
                    pdp += p[j] * s;
                    if (dv[j])
                        for (std::size_t c = 0; c < hd; ++c) dv[j][h * hd + c] += p[j] * go[h * hd + c];
                }
                for (std::size_t j = 0; j < visible; ++j) {
                    const double ds = p[j] * (dp[j] - pdp) * inv_sqrt;
                    if (ds == 0.0) continue;
                    if (dq_base)
                        for (std::size_t c = 0; c < hd; ++c) dq_base[t * d + h * hd + c] += ds * krow[j][h * hd + c];
                    if (dk[j])
                        for (std::size_t c = 0; c < hd; ++c) dk[j][h * hd + c] += ds * qr[h * hd + c];
                }
            }
        }
    });
}

Var dropout(const Var& x, double rate, Rng& rng) {
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw ArgumentError("dropout rate must be < 1");
    const double keep = 1.0 - rate;
    Tensor mask(x.rows(), x.cols());
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
        out[i] = x.value()[i] * mask[i];
    }
    return make_result(std::move(out), {x}, [mask = std::move(mask)](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
    });
}

Var embedding(const Var& table, std::span<const int> ids) {
    const std::size_t n = table.cols();
    Tensor out(ids.size(), n);
    std::vector<int> idv(ids.begin(), ids.end());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= table.rows()) throw ShapeError("embedding id outside vocab");
        auto src = table.value().row(static_cast<std::size_t>(ids[t]));
        std::copy(src.begin(), src.end(), out.row(t).begin());
    }
    return make_result(std::move(out), {table}, [idv = std::move(idv), n](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t t = 0; t < idv.size(); ++t)
            for (std::size_t i = 0; i < n; ++i) g.at(static_cast<std::size_t>(idv[t]), i) += self.grad.at(t, i);
    });
}

Var concat_rows(std::span<const Var> parts) {
    require(!parts.empty(), "concat_rows: no parts");
    const std::size_t n = parts[0].cols();
    std::size_t T = 0;
    for (const auto& p : parts) {
        require(p.cols() == n, "concat_rows: width mismatch");
        T += p.rows();
    }
    Tensor out(T, n);
    std::size_t r = 0;
    for (const auto& p : parts)
        for (std::size_t i = 0; i < p.rows(); ++i, ++r) {
            auto src = p.value().row(i);
            std::copy(src.begin(), src.end(), out.row(r).begin());
        }
    return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
        std::size_t r = 0;
        for (auto& p : self.parents) {
            const std::size_t rows = p->value.rows();
            if (p->requires_grad) {
                Tensor& g = p->grad_buffer();
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t c = 0; c < g.cols(); ++c) g.at(i, c) += self.grad.at(r + i, c);
            }
            r += rows;
        }
    });
}

Var slice_rows(const Var& x, std::size_t start, std::size_t count) {
    require(start + count <= x.rows(), "slice_rows: out of range");
    Tensor out(count, x.cols());
    for (std::size_t i = 0; i < count; ++i) {
        auto src = x.value().row(start + i);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return make_result(std::move(out), {x}, [start, count](Node& self) {
        Tensor& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t c = 0; c < g.cols(); ++c) g.at(start + i, c) += self.grad.at(i, c);
    });
}

Var cross_entropy(const Var& logits, std::span<const int> targets, std::span<const char> mask) {
    const double loss = kernels::cross_entropy(logits.value(), targets, mask);
    std::vector<int> tv(targets.begin(), targets.end());
    std::vector<char> mv(mask.begin(), mask.end());
    std::size_t count = 0;
    for (char m : mv) count += m ? 1 : 0;
    return make_result(Tensor::scalar(loss), {logits}, [tv = std::move(tv), mv = std::move(mv), count](Node& self) {
        auto& ln = *self.parents[0];
        Tensor& g = ln.grad_buffer();
        const double up = self.grad[0] / static_cast<double>(count);
        for (std::size_t t = 0; t < tv.size(); ++t) {
            if (!mv[t]) continue;
            Tensor p = kernels::softmax_row(ln.value.row(t));
            for (std::size_t i = 0; i < p.size(); ++i) g.at(t, i) += up * p[i];
            g.at(t, static_cast<std::size_t>(tv[t])) -= up;
        }
    });
}

Var l1_loss(const Var& pred, const Tensor& target) {
    const double loss = kernels::l1_loss(pred.value(), target);
    return make_result(Tensor::scalar(loss), {pred}, [target](Node& self) {
        auto& pn = *self.parents[0];
        Tensor& g = pn.grad_buffer();
        const double up = self.grad[0] / static_cast<double>(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double diff = pn.value[i] - target[i];
            g[i] += up * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
        }
    });
}

Var sum(std::span<const Var> scalars) {
    require(!scalars.empty(), "sum: nothing to add");
    double s = 0.0;
    for (const auto& v : scalars) s += v.value().item();
    return make_result(Tensor::scalar(s), std::vector<Var>(scalars.begin(), scalars.end()), [](Node& self) {
        for (auto& p : self.parents)
            if (p->requires_grad) p->grad_buffer()[0] += self.grad[0];
    });
}

}  // namespace ops

}  // namespace vital
