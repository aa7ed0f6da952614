#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "factground/error.hpp"
#include "factground/rng.hpp"

namespace factground {

// Dense parameter block (matrix rows x cols, or vector with cols == 1) with
// gradient and first/second moment accumulators for the optimizer.
struct Tensor {
    std::string name;
    int rows = 0, cols = 0;
    bool decay = false;      // weight decay applies (off for biases/embeddings)
    bool trainable = true;   // frozen tensors skip gradient updates
    std::vector<double> v, g, m, s;

    void resize(const std::string& n, int r, int c, bool dec, bool train = true) {
        name = n;
        rows = r;
        cols = c;
        decay = dec;
        trainable = train;
        const std::size_t sz = static_cast<std::size_t>(r) * c;
        v.assign(sz, 0.0);
        g.assign(sz, 0.0);
        m.assign(sz, 0.0);
        s.assign(sz, 0.0);
    }

    std::size_t size() const { return v.size(); }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

inline void init_xavier(Tensor& t, Rng& rng) {
    const double bound = std::sqrt(6.0 / (t.rows + t.cols));
    for (auto& x : t.v) x = rng.uniform(-bound, bound);
}

inline void init_embedding(Tensor& t, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.cols));
    for (auto& x : t.v) x = rng.uniform(-bound, bound);
}

// y = W x + b, with W laid out row-major (rows = out, cols = in).
inline void affine(const Tensor& W, const Tensor& b, const std::vector<double>& x,
                   std::vector<double>& y) {
    y.assign(static_cast<std::size_t>(W.rows), 0.0);
    for (int r = 0; r < W.rows; ++r) {
        const double* wr = W.v.data() + static_cast<std::size_t>(r) * W.cols;
        double acc = b.v[static_cast<std::size_t>(r)];
        for (int c = 0; c < W.cols; ++c) acc += wr[c] * x[static_cast<std::size_t>(c)];
        y[static_cast<std::size_t>(r)] = acc;
    }
}

// Accumulates dW, db and returns dx for y = W x + b.
inline void affine_backward(Tensor& W, Tensor& b, const std::vector<double>& x,
                            const std::vector<double>& dy, std::vector<double>& dx) {
    dx.assign(static_cast<std::size_t>(W.cols), 0.0);
    for (int r = 0; r < W.rows; ++r) {
        const double d = dy[static_cast<std::size_t>(r)];
        if (d == 0.0) continue;
        double* gw = W.g.data() + static_cast<std::size_t>(r) * W.cols;
        const double* wr = W.v.data() + static_cast<std::size_t>(r) * W.cols;
        b.g[static_cast<std::size_t>(r)] += d;
        for (int c = 0; c < W.cols; ++c) {
            gw[c] += d * x[static_cast<std::size_t>(c)];
            dx[static_cast<std::size_t>(c)] += d * wr[c];
        }
    }
}

inline void relu(const std::vector<double>& x, std::vector<double>& y) {
    y.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

inline void relu_backward(const std::vector<double>& pre, std::vector<double>& d) {
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (pre[i] <= 0.0) d[i] = 0.0;
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Returns z = u / ||u|| and the norm used (guarded).
inline double l2_normalize(const std::vector<double>& u, std::vector<double>& z) {
    double n2 = 0.0;
    for (double x : u) n2 += x * x;
    const double n = std::sqrt(std::max(n2, 1e-24));
    z.resize(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) z[i] = u[i] / n;
    return n;
}

// dL/du for z = u/||u||: (g - z (z.g)) / n.
inline void l2_normalize_backward(const std::vector<double>& z, double n,
                                  const std::vector<double>& dz, std::vector<double>& du) {
    double zg = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) zg += z[i] * dz[i];
    du.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) du[i] = (dz[i] - z[i] * zg) / n;
}

// Inverted-dropout mask: each unit is 1/keep with probability keep, else 0.
// rate == 0 (or inference) produces all-ones.
inline void make_dropout_mask(std::vector<double>& mask, std::size_t n, double rate, Rng* rng) {
    mask.assign(n, 1.0);
    if (rate <= 0.0 || rng == nullptr) return;
    const double keep = 1.0 - rate;
    for (auto& m : mask) m = rng->next_double() < keep ? 1.0 / keep : 0.0;
}

// Linear warmup to lr_max, then cosine annealing to zero. step is 1-based.
inline double lr_at_step(std::int64_t step, std::int64_t total_steps, double lr_max,
                         int warmup_steps) {
    if (warmup_steps > 0 && step <= warmup_steps) {
        return lr_max * static_cast<double>(step) / warmup_steps;
    }
    const std::int64_t t = step - warmup_steps;
    const std::int64_t span = std::max<std::int64_t>(1, total_steps - warmup_steps);
    const double progress = std::min(1.0, static_cast<double>(t) / static_cast<double>(span));
    return 0.5 * lr_max * (1.0 + std::cos(progress * 3.14159265358979323846));
}

struct AdamW {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.01;
    std::int64_t t = 0;

    void step(std::vector<Tensor*>& params, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (Tensor* p : params) {
            if (!p->trainable) continue;
            for (std::size_t i = 0; i < p->size(); ++i) {
                const double g = p->g[i];
                p->m[i] = beta1 * p->m[i] + (1.0 - beta1) * g;
                p->s[i] = beta2 * p->s[i] + (1.0 - beta2) * g * g;
                const double mhat = p->m[i] / bc1;
                const double shat = p->s[i] / bc2;
                double upd = mhat / (std::sqrt(shat) + eps);
                if (p->decay) upd += weight_decay * p->v[i];
                p->v[i] -= lr * upd;
            }
        }
    }
};

}  // namespace factground
