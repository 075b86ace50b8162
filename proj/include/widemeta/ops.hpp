#pragma once

#include <Eigen/Core>
#include <cmath>
#include <map>
#include <optional>

#include "widemeta/tensor.hpp"

namespace widemeta {

template <typename T>
using Gradients = std::map<std::string, Tensor<T>>;

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// out[b,o] = sum_i W[o,i] x[b,i] + b[o]
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b, Tape<T>* tape) {
    if (x.rank() != 2 || W.rank() != 2 || x.dim(1) != W.dim(1))
        throw DimensionError("affine: x " + shape_str(x.shape) + " incompatible with W " +
                             shape_str(W.shape));
    if (b.size() != W.dim(0))
        throw DimensionError("affine: bias " + shape_str(b.shape) + " incompatible with W " +
                             shape_str(W.shape));
    const auto B = static_cast<Eigen::Index>(x.dim(0));
    const auto I = static_cast<Eigen::Index>(x.dim(1));
    const auto O = static_cast<Eigen::Index>(W.dim(0));

    Tensor<T> out({x.dim(0), W.dim(0)});
    ConstMatMap<T> xm(x.ptr(), B, I), wm(W.ptr(), O, I);
    MatMap<T> om(out.ptr(), B, O);
    om.noalias() = xm * wm.transpose();
    ConstMatMap<T> bm(b.ptr(), 1, O);
    om.rowwise() += bm.row(0);

    if (!tape) return out;
    int xn = tape->node_of(x), wn = tape->node_of(W), bn = tape->node_of(b);
    if (xn < 0 && wn < 0 && bn < 0) return out;
    Tensor<T> xc = x, wc = W;  // shallow captures
    tape->record(out, {xn, wn, bn}, [=](const Buffer<T>& g, Tape<T>& t) {
        ConstMatMap<T> gm(g.data(), B, O);
        ConstMatMap<T> xm2(xc.ptr(), B, I), wm2(wc.ptr(), O, I);
        if (xn >= 0) {
            auto& gx = t.grad_buffer(xn, static_cast<std::size_t>(B * I));
            MatMap<T>(gx.data(), B, I).noalias() += gm * wm2;
        }
        if (wn >= 0) {
            auto& gw = t.grad_buffer(wn, static_cast<std::size_t>(O * I));
            MatMap<T>(gw.data(), O, I).noalias() += gm.transpose() * xm2;
        }
        if (bn >= 0) {
            auto& gb = t.grad_buffer(bn, static_cast<std::size_t>(O));
            MatMap<T>(gb.data(), 1, O) += gm.colwise().sum();
        }
    });
    return out;
}

namespace detail {

// col layout: [C*k*k, OH*OW] per image, patch index varies fastest.
template <typename T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int OH, int OW,
            T* col) {
    for (int c = 0; c < C; ++c) {
        const T* xc = x + static_cast<std::ptrdiff_t>(c) * H * W;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* row = col + (static_cast<std::ptrdiff_t>(c) * k * k + ki * k + kj) *
                                   (static_cast<std::ptrdiff_t>(OH) * OW);
                for (int oh = 0; oh < OH; ++oh) {
                    int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) {
                        for (int ow = 0; ow < OW; ++ow) row[oh * OW + ow] = T{0};
                        continue;
                    }
                    const T* xr = xc + static_cast<std::ptrdiff_t>(ih) * W;
                    for (int ow = 0; ow < OW; ++ow) {
                        int iw = ow * stride - pad + kj;
                        row[oh * OW + ow] = (iw >= 0 && iw < W) ? xr[iw] : T{0};
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int C, int H, int W, int k, int stride, int pad, int OH, int OW,
                T* x) {
    for (int c = 0; c < C; ++c) {
        T* xc = x + static_cast<std::ptrdiff_t>(c) * H * W;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* row = col + (static_cast<std::ptrdiff_t>(c) * k * k + ki * k + kj) *
                                         (static_cast<std::ptrdiff_t>(OH) * OW);
                for (int oh = 0; oh < OH; ++oh) {
                    int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) continue;
                    T* xr = xc + static_cast<std::ptrdiff_t>(ih) * W;
                    for (int ow = 0; ow < OW; ++ow) {
                        int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < W) xr[iw] += row[oh * OW + ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Cross-correlation with zero padding; w is [F, C, k, k], square odd kernel.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int padding, Tape<T>* tape) {
    if (x.rank() != 4 || w.rank() != 4)
        throw DimensionError("conv2d: expected 4-d input and weight, got " +
                             shape_str(x.shape) + " and " + shape_str(w.shape));
    if (x.dim(1) != w.dim(1))
        throw DimensionError("conv2d: input channels " + shape_str(x.shape) +
                             " vs weight " + shape_str(w.shape));
    if (w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
        throw ConfigError("conv2d: kernel must be square and odd, got " + shape_str(w.shape));
    if (b.size() != w.dim(0))
        throw DimensionError("conv2d: bias " + shape_str(b.shape) + " vs weight " +
                             shape_str(w.shape));

    const int B = static_cast<int>(x.dim(0)), C = static_cast<int>(x.dim(1));
    const int H = static_cast<int>(x.dim(2)), Wd = static_cast<int>(x.dim(3));
    const int F = static_cast<int>(w.dim(0)), k = static_cast<int>(w.dim(2));
    const int OH = (H + 2 * padding - k) / stride + 1;
    const int OW = (Wd + 2 * padding - k) / stride + 1;
    if (OH < 1 || OW < 1)
        throw ConfigError("conv2d: non-positive output size for input " + shape_str(x.shape) +
                          ", kernel " + std::to_string(k) + ", stride " + std::to_string(stride) +
                          ", padding " + std::to_string(padding));

    const std::size_t ckk = static_cast<std::size_t>(C) * k * k;
    const std::size_t ohow = static_cast<std::size_t>(OH) * OW;
    auto col = std::make_shared<Buffer<T>>(static_cast<std::size_t>(B) * ckk * ohow);

    Tensor<T> out({static_cast<std::size_t>(B), static_cast<std::size_t>(F),
                   static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)});
    ConstMatMap<T> wm(w.ptr(), F, static_cast<Eigen::Index>(ckk));
    for (int bi = 0; bi < B; ++bi) {
        T* colb = col->data() + static_cast<std::size_t>(bi) * ckk * ohow;
        detail::im2col(x.ptr() + static_cast<std::size_t>(bi) * C * H * Wd, C, H, Wd, k, stride,
                       padding, OH, OW, colb);
        ConstMatMap<T> cm(colb, static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(ohow));
        MatMap<T> om(out.ptr() + static_cast<std::size_t>(bi) * F * ohow, F,
                     static_cast<Eigen::Index>(ohow));
        om.noalias() = wm * cm;
        for (int f = 0; f < F; ++f) om.row(f).array() += b.at(static_cast<std::size_t>(f));
    }

    if (!tape) return out;
    int xn = tape->node_of(x), wn = tape->node_of(w), bn = tape->node_of(b);
    if (xn < 0 && wn < 0 && bn < 0) return out;
    Tensor<T> wc = w;
    tape->record(out, {xn, wn, bn}, [=](const Buffer<T>& g, Tape<T>& t) {
        ConstMatMap<T> wm2(wc.ptr(), F, static_cast<Eigen::Index>(ckk));
        Buffer<T> dcol;
        if (xn >= 0) dcol.resize(ckk * ohow);
        for (int bi = 0; bi < B; ++bi) {
            ConstMatMap<T> gm(g.data() + static_cast<std::size_t>(bi) * F * ohow, F,
                              static_cast<Eigen::Index>(ohow));
            const T* colb = col->data() + static_cast<std::size_t>(bi) * ckk * ohow;
            ConstMatMap<T> cm(colb, static_cast<Eigen::Index>(ckk),
                              static_cast<Eigen::Index>(ohow));
            if (wn >= 0) {
                auto& gw = t.grad_buffer(wn, static_cast<std::size_t>(F) * ckk);
                MatMap<T>(gw.data(), F, static_cast<Eigen::Index>(ckk)).noalias() +=
                    gm * cm.transpose();
            }
            if (bn >= 0) {
                auto& gb = t.grad_buffer(bn, static_cast<std::size_t>(F));
                for (int f = 0; f < F; ++f) gb[static_cast<std::size_t>(f)] += gm.row(f).sum();
            }
            if (xn >= 0) {
                MatMap<T>(dcol.data(), static_cast<Eigen::Index>(ckk),
                          static_cast<Eigen::Index>(ohow))
                    .noalias() = wm2.transpose() * gm;
                auto& gx = t.grad_buffer(xn, static_cast<std::size_t>(B) * C * H * Wd);
                detail::col2im_add(dcol.data(), C, H, Wd, k, stride, padding, OH, OW,
                                   gx.data() + static_cast<std::size_t>(bi) * C * H * Wd);
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape) {
    Tensor<T> out(x.shape);
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) out.at(i) = x.at(i) > T{0} ? x.at(i) : T{0};
    if (!tape) return out;
    int xn = tape->node_of(x);
    if (xn < 0) return out;
    Tensor<T> xc = x;
    tape->record(out, {xn}, [=](const Buffer<T>& g, Tape<T>& t) {
        auto& gx = t.grad_buffer(xn, n);
        for (std::size_t i = 0; i < n; ++i)
            if (xc.at(i) > T{0}) gx[i] += g[i];
    });
    return out;
}

// Per-channel standardization with current-batch statistics (biased variance).
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                      Tape<T>* tape) {
    if (x.rank() != 4) throw DimensionError("batchnorm2d: expected 4-d input");
    const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (gamma.size() != C || beta.size() != C)
        throw DimensionError("batchnorm2d: gamma/beta must have " + std::to_string(C) +
                             " entries");
    const std::size_t N = B * HW;
    if (N < 2) throw ContractError("batchnorm2d: degenerate batch, need B*H*W >= 2");

    auto xhat = std::make_shared<std::vector<T>>(x.size());
    auto inv_std = std::make_shared<std::vector<T>>(C);
    Tensor<T> out(x.shape);
    for (std::size_t c = 0; c < C; ++c) {
        T mean = 0, var = 0;
        for (std::size_t b = 0; b < B; ++b) {
            const T* p = x.ptr() + (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) mean += p[i];
        }
        mean /= static_cast<T>(N);
        for (std::size_t b = 0; b < B; ++b) {
            const T* p = x.ptr() + (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                T d = p[i] - mean;
                var += d * d;
            }
        }
        var /= static_cast<T>(N);
        const T is = T{1} / std::sqrt(var + eps);
        (*inv_std)[c] = is;
        const T g = gamma.at(c), be = beta.at(c);
        for (std::size_t b = 0; b < B; ++b) {
            const T* p = x.ptr() + (b * C + c) * HW;
            T* xh = xhat->data() + (b * C + c) * HW;
            T* o = out.ptr() + (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                xh[i] = (p[i] - mean) * is;
                o[i] = g * xh[i] + be;
            }
        }
    }

    if (!tape) return out;
    int xn = tape->node_of(x), gn = tape->node_of(gamma), bn = tape->node_of(beta);
    if (xn < 0 && gn < 0 && bn < 0) return out;
    Tensor<T> gc = gamma;
    tape->record(out, {xn, gn, bn}, [=](const Buffer<T>& g, Tape<T>& t) {
        for (std::size_t c = 0; c < C; ++c) {
            T sum_g = 0, sum_gx = 0;
            for (std::size_t b = 0; b < B; ++b) {
                const T* gp = g.data() + (b * C + c) * HW;
                const T* xh = xhat->data() + (b * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) {
                    sum_g += gp[i];
                    sum_gx += gp[i] * xh[i];
                }
            }
            if (gn >= 0) t.grad_buffer(gn, C)[c] += sum_gx;
            if (bn >= 0) t.grad_buffer(bn, C)[c] += sum_g;
            if (xn >= 0) {
                auto& gx = t.grad_buffer(xn, B * C * HW);
                const T coef = gc.at(c) * (*inv_std)[c] / static_cast<T>(N);
                for (std::size_t b = 0; b < B; ++b) {
                    const T* gp = g.data() + (b * C + c) * HW;
                    const T* xh = xhat->data() + (b * C + c) * HW;
                    T* o = gx.data() + (b * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i)
                        o[i] += coef * (static_cast<T>(N) * gp[i] - sum_g - xh[i] * sum_gx);
                }
            }
        }
    });
    return out;
}

// Mean over the batch of -log softmax(logits)[label], max-stabilized.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                                Tape<T>* tape) {
    if (logits.rank() != 2) throw DimensionError("softmax_cross_entropy: expected 2-d logits");
    const std::size_t B = logits.dim(0), N = logits.dim(1);
    if (labels.size() != B)
        throw ContractError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                            " labels for batch " + std::to_string(B));
    auto probs = std::make_shared<std::vector<T>>(logits.size());
    T loss = 0;
    for (std::size_t b = 0; b < B; ++b) {
        if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= N)
            throw ContractError("softmax_cross_entropy: label " + std::to_string(labels[b]) +
                                " out of range [0," + std::to_string(N) + ")");
        const T* row = logits.ptr() + b * N;
        T mx = row[0];
        for (std::size_t j = 1; j < N; ++j) mx = std::max(mx, row[j]);
        T denom = 0;
        for (std::size_t j = 0; j < N; ++j) denom += std::exp(row[j] - mx);
        T* pr = probs->data() + b * N;
        for (std::size_t j = 0; j < N; ++j) pr[j] = std::exp(row[j] - mx) / denom;
        loss -= std::log(pr[static_cast<std::size_t>(labels[b])]);
    }
    loss /= static_cast<T>(B);
    Tensor<T> out({1}, {loss});

    if (!tape) return out;
    int ln = tape->node_of(logits);
    if (ln < 0) return out;
    auto lab = std::make_shared<std::vector<int>>(labels);
    tape->record(out, {ln}, [=](const Buffer<T>& g, Tape<T>& t) {
        auto& gl = t.grad_buffer(ln, B * N);
        const T scale = g[0] / static_cast<T>(B);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < N; ++j)
                gl[b * N + j] += scale * ((*probs)[b * N + j] -
                                          (static_cast<std::size_t>((*lab)[b]) == j ? T{1} : T{0}));
    });
    return out;
}

// Shape-only change; shares storage with the input.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<std::size_t> shape, Tape<T>* tape) {
    if (Tensor<T>::count(shape) != x.size())
        throw DimensionError("reshape: " + shape_str(x.shape) + " to " + shape_str(shape));
    Tensor<T> out;
    out.shape = std::move(shape);
    out.data = x.data;
    if (!tape) return out;
    int xn = tape->node_of(x);
    if (xn < 0) return out;
    const std::size_t n = x.size();
    tape->record(out, {xn}, [=](const Buffer<T>& g, Tape<T>& t) {
        t.add_grad(xn, g.data(), n);
    });
    return out;
}

// Gradients for every requires_grad parameter in `params`; unreachable
// parameters get zeros. Consumes the tape.
template <typename T>
Gradients<T> backward(Tape<T>& tape, const Tensor<T>& loss,
                      const std::map<std::string, Tensor<T>>& params) {
    tape.run_backward(loss);
    Gradients<T> out;
    for (const auto& [name, p] : params) {
        if (!p.requires_grad) continue;
        Tensor<T> g(p.shape);
        if (tape.tracks(p)) {
            const auto& buf = tape.grad(p.node);
            if (!buf.empty()) std::copy(buf.begin(), buf.end(), g.ptr());
        }
        out.emplace(name, std::move(g));
    }
    return out;
}

// p <- p - lr * (g (.) mask). Parameters without a gradient entry, masked-out
// coordinates, and lr = 0 all leave values bit-identical.
template <typename T>
void sgd_step(std::map<std::string, Tensor<T>>& params, const Gradients<T>& grads, T lr,
              const std::map<std::string, Tensor<T>>* masks = nullptr) {
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor<T>& g = git->second;
        if (g.shape != p.shape)
            throw DimensionError("sgd_step: gradient " + shape_str(g.shape) + " vs parameter " +
                                 shape_str(p.shape) + " for '" + name + "'");
        const Tensor<T>* mask = nullptr;
        if (masks) {
            auto mit = masks->find(name);
            if (mit != masks->end()) {
                if (mit->second.shape != p.shape)
                    throw DimensionError("sgd_step: mask shape mismatch for '" + name + "'");
                mask = &mit->second;
            }
        }
        const std::size_t n = p.size();
        for (std::size_t i = 0; i < n; ++i) {
            T d = lr * g.at(i);
            if (mask) d *= mask->at(i);
            if (d != T{0}) p.at(i) -= d;
        }
    }
}

// Central-difference gradient of f at p; the verification oracle.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& p,
                           T eps) {
    Tensor<T> g(p.shape);
    Tensor<T> work = p.clone();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const T orig = work.at(i);
        work.at(i) = orig + eps;
        const T hi = f(work);
        work.at(i) = orig - eps;
        const T lo = f(work);
        work.at(i) = orig;
        g.at(i) = (hi - lo) / (2 * eps);
    }
    return g;
}

}  // namespace widemeta
