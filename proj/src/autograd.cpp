#include "wayflow/autograd.hpp"

#include <cmath>
#include <unordered_set>

#include "wayflow/kernels.hpp"

namespace wayflow::ag {

namespace {

thread_local bool g_grad_enabled = true;

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward_op) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents)
            if (p->requires_grad) needs = true;
    }
    if (needs) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_op = std::move(backward_op);
    }
    return n;
}

void check_rank2(const Var& x, const char* op) {
    if (x->value.rank() != 2)
        throw ShapeError(std::string(op) + " expects a rank-2 tensor, got " +
                         x->value.shape_str());
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

Var leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad && g_grad_enabled;
    return n;
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor out(a->value.shape());
    kernels::add(a->value.data(), b->value.data(), out.data(), out.numel());
    return make_node(std::move(out), {a, b}, [](Node& self) {
        for (int i = 0; i < 2; ++i) {
            Node& p = *self.parents[i];
            if (p.requires_grad) {
                Tensor& g = p.ensure_grad();
                kernels::add(g.data(), self.grad.data(), g.data(),
                             self.grad.numel());
            }
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "sub");
    Tensor out(a->value.shape());
    kernels::sub(a->value.data(), b->value.data(), out.data(), out.numel());
    return make_node(std::move(out), {a, b}, [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.requires_grad) {
            Tensor& g = a.ensure_grad();
            kernels::add(g.data(), self.grad.data(), g.data(),
                         self.grad.numel());
        }
        if (b.requires_grad)
            kernels::axpy(-1.0, self.grad.data(), b.ensure_grad().data(),
                          self.grad.numel());
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor out(a->value.shape());
    kernels::mul(a->value.data(), b->value.data(), out.data(), out.numel());
    return make_node(std::move(out), {a, b}, [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        const int64_t n = self.grad.numel();
        if (a.requires_grad) {
            Tensor& ga = a.ensure_grad();
            const double* g = self.grad.data();
            const double* bv = b.value.data();
            double* out = ga.data();
            for (int64_t i = 0; i < n; ++i) out[i] += g[i] * bv[i];
        }
        if (b.requires_grad) {
            Tensor& gb = b.ensure_grad();
            const double* g = self.grad.data();
            const double* av = a.value.data();
            double* out = gb.data();
            for (int64_t i = 0; i < n; ++i) out[i] += g[i] * av[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out(a->value.shape());
    kernels::scale(a->value.data(), s, out.data(), out.numel());
    return make_node(std::move(out), {a}, [s](Node& self) {
        Node& a = *self.parents[0];
        if (a.requires_grad)
            kernels::axpy(s, self.grad.data(), a.ensure_grad().data(),
                          self.grad.numel());
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (auto& x : out.vec()) x += s;
    return make_node(std::move(out), {a}, [](Node& self) {
        Node& a = *self.parents[0];
        if (a.requires_grad) {
            Tensor& g = a.ensure_grad();
            kernels::add(g.data(), self.grad.data(), g.data(),
                         self.grad.numel());
        }
    });
}

Var add_bias(const Var& x, const Var& b) {
    check_rank2(x, "add_bias");
    if (b->value.rank() != 1 || b->value.dim(0) != x->value.dim(1))
        throw ShapeError("add_bias: bias shape " + b->value.shape_str() +
                         " does not match row width of " +
                         x->value.shape_str());
    const int64_t rows = x->value.dim(0), cols = x->value.dim(1);
    Tensor out(x->value.shape());
    for (int64_t r = 0; r < rows; ++r)
        kernels::add(x->value.data() + r * cols, b->value.data(),
                     out.data() + r * cols, cols);
    return make_node(std::move(out), {x, b}, [rows, cols](Node& self) {
        Node& x = *self.parents[0];
        Node& b = *self.parents[1];
        if (x.requires_grad) {
            Tensor& g = x.ensure_grad();
            kernels::add(g.data(), self.grad.data(), g.data(),
                         self.grad.numel());
        }
        if (b.requires_grad) {
            Tensor& gb = b.ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                kernels::add(gb.data(), self.grad.data() + r * cols, gb.data(),
                             cols);
        }
    });
}

Var mul_row(const Var& x, const Var& g) {
    check_rank2(x, "mul_row");
    if (g->value.rank() != 1 || g->value.dim(0) != x->value.dim(1))
        throw ShapeError("mul_row: gain shape mismatch");
    const int64_t rows = x->value.dim(0), cols = x->value.dim(1);
    Tensor out(x->value.shape());
    for (int64_t r = 0; r < rows; ++r)
        kernels::mul(x->value.data() + r * cols, g->value.data(),
                     out.data() + r * cols, cols);
    return make_node(std::move(out), {x, g}, [rows, cols](Node& self) {
        Node& x = *self.parents[0];
        Node& g = *self.parents[1];
        if (x.requires_grad) {
            Tensor& gx = x.ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const double* gr = self.grad.data() + r * cols;
                const double* gv = g.value.data();
                double* out = gx.data() + r * cols;
                for (int64_t c = 0; c < cols; ++c) out[c] += gr[c] * gv[c];
            }
        }
        if (g.requires_grad) {
            Tensor& gg = g.ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const double* gr = self.grad.data() + r * cols;
                const double* xv = x.value.data() + r * cols;
                double* out = gg.data();
                for (int64_t c = 0; c < cols; ++c) out[c] += gr[c] * xv[c];
            }
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    if (a->value.dim(1) != b->value.dim(0))
        throw ShapeError("matmul inner dimension mismatch " +
                         a->value.shape_str() + " vs " + b->value.shape_str());
    const int64_t m = a->value.dim(0), k = a->value.dim(1),
                  n = b->value.dim(1);
    Tensor out({m, n});
    kernels::matmul(a->value.data(), b->value.data(), out.data(), m, k, n);
    return make_node(std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.requires_grad) {
            // dA += dC * B^T
            Tensor bt({n, k});
            kernels::transpose(b.value.data(), bt.data(), k, n);
            kernels::matmul(self.grad.data(), bt.data(),
                            a.ensure_grad().data(), m, n, k, true);
        }
        if (b.requires_grad) {
            // dB += A^T * dC
            Tensor at({k, m});
            kernels::transpose(a.value.data(), at.data(), m, k);
            kernels::matmul(at.data(), self.grad.data(),
                            b.ensure_grad().data(), k, m, n, true);
        }
    });
}

Var transpose(const Var& a) {
    check_rank2(a, "transpose");
    const int64_t r = a->value.dim(0), c = a->value.dim(1);
    Tensor out({c, r});
    kernels::transpose(a->value.data(), out.data(), r, c);
    return make_node(std::move(out), {a}, [r, c](Node& self) {
        Node& a = *self.parents[0];
        if (a.requires_grad) {
            Tensor gt({r, c});
            kernels::transpose(self.grad.data(), gt.data(), c, r);
            Tensor& g = a.ensure_grad();
            kernels::add(g.data(), gt.data(), g.data(), gt.numel());
        }
    });
}

Var slice_cols(const Var& x, int64_t c0, int64_t c1) {
    check_rank2(x, "slice_cols");
    const int64_t rows = x->value.dim(0), cols = x->value.dim(1);
    if (c0 < 0 || c1 > cols || c0 >= c1)
        throw ShapeError("slice_cols: bad column range");
    Tensor out({rows, c1 - c0});
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = c0; c < c1; ++c)
            out.at(r, c - c0) = x->value.at(r, c);
    return make_node(std::move(out), {x}, [rows, cols, c0, c1](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        Tensor& gx = x.ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = c0; c < c1; ++c)
                gx.data()[r * cols + c] += self.grad.at(r, c - c0);
    });
}

Var slice_rows(const Var& x, int64_t r0, int64_t r1) {
    check_rank2(x, "slice_rows");
    const int64_t rows = x->value.dim(0), cols = x->value.dim(1);
    if (r0 < 0 || r1 > rows || r0 >= r1)
        throw ShapeError("slice_rows: bad row range");
    Tensor out({r1 - r0, cols});
    std::copy(x->value.data() + r0 * cols, x->value.data() + r1 * cols,
              out.data());
    return make_node(std::move(out), {x}, [r0, cols](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        Tensor& gx = x.ensure_grad();
        kernels::add(gx.data() + r0 * cols, self.grad.data(),
                     gx.data() + r0 * cols, self.grad.numel());
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const int64_t rows = parts[0]->value.dim(0);
    int64_t total = 0;
    for (const auto& p : parts) {
        check_rank2(p, "concat_cols");
        if (p->value.dim(0) != rows)
            throw ShapeError("concat_cols: row count mismatch");
        total += p->value.dim(1);
    }
    Tensor out({rows, total});
    std::vector<int64_t> offsets;
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t w = p->value.dim(1);
        offsets.push_back(off);
        for (int64_t r = 0; r < rows; ++r)
            std::copy(p->value.data() + r * w, p->value.data() + (r + 1) * w,
                      out.data() + r * total + off);
        off += w;
    }
    return make_node(std::move(out), parts,
                     [rows, total, offsets](Node& self) {
                         for (size_t i = 0; i < self.parents.size(); ++i) {
                             Node& p = *self.parents[i];
                             if (!p.requires_grad) continue;
                             const int64_t w = p.value.dim(1);
                             Tensor& gp = p.ensure_grad();
                             for (int64_t r = 0; r < rows; ++r)
                                 kernels::add(gp.data() + r * w,
                                              self.grad.data() + r * total +
                                                  offsets[i],
                                              gp.data() + r * w, w);
                         }
                     });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const int64_t cols = parts[0]->value.dim(1);
    int64_t total = 0;
    for (const auto& p : parts) {
        check_rank2(p, "concat_rows");
        if (p->value.dim(1) != cols)
            throw ShapeError("concat_rows: column count mismatch");
        total += p->value.dim(0);
    }
    Tensor out({total, cols});
    int64_t row = 0;
    std::vector<int64_t> starts;
    for (const auto& p : parts) {
        starts.push_back(row);
        std::copy(p->value.data(), p->value.data() + p->value.numel(),
                  out.data() + row * cols);
        row += p->value.dim(0);
    }
    return make_node(std::move(out), parts, [cols, starts](Node& self) {
        for (size_t i = 0; i < self.parents.size(); ++i) {
            Node& p = *self.parents[i];
            if (!p.requires_grad) continue;
            Tensor& gp = p.ensure_grad();
            kernels::add(gp.data(), self.grad.data() + starts[i] * cols,
                         gp.data(), gp.numel());
        }
    });
}

Var repeat_rows(const Var& x, int64_t reps) {
    check_rank2(x, "repeat_rows");
    if (reps < 1) throw ShapeError("repeat_rows: reps must be >= 1");
    const int64_t rows = x->value.dim(0), cols = x->value.dim(1);
    Tensor out({rows * reps, cols});
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t q = 0; q < reps; ++q)
            std::copy(x->value.data() + r * cols,
                      x->value.data() + (r + 1) * cols,
                      out.data() + (r * reps + q) * cols);
    return make_node(std::move(out), {x}, [rows, cols, reps](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        Tensor& gx = x.ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t q = 0; q < reps; ++q)
                kernels::add(gx.data() + r * cols,
                             self.grad.data() + (r * reps + q) * cols,
                             gx.data() + r * cols, cols);
    });
}

Var gather_rows(const Var& table, const std::vector<int64_t>& idx) {
    check_rank2(table, "gather_rows");
    const int64_t rows = table->value.dim(0), cols = table->value.dim(1);
    for (int64_t i : idx)
        if (i < 0 || i >= rows)
            throw ValueError("gather_rows: index out of range");
    Tensor out({static_cast<int64_t>(idx.size()), cols});
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(table->value.data() + idx[r] * cols,
                  table->value.data() + (idx[r] + 1) * cols,
                  out.data() + static_cast<int64_t>(r) * cols);
    return make_node(std::move(out), {table}, [idx, cols](Node& self) {
        Node& t = *self.parents[0];
        if (!t.requires_grad) return;
        Tensor& gt = t.ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r)
            kernels::add(gt.data() + idx[r] * cols,
                         self.grad.data() + static_cast<int64_t>(r) * cols,
                         gt.data() + idx[r] * cols, cols);
    });
}

Var rms_norm(const Var& x, double eps) {
    check_rank2(x, "rms_norm");
    const int64_t rows = x->value.dim(0), cols = x->value.dim(1);
    if (cols < 1) throw ShapeError("rms_norm: empty last axis");
    Tensor out(x->value.shape());
    Tensor inv_r({rows});
    for (int64_t r = 0; r < rows; ++r) {
        const double ms =
            kernels::sumsq(x->value.data() + r * cols, cols) /
            static_cast<double>(cols);
        const double ir = 1.0 / std::sqrt(ms + eps);
        inv_r[r] = ir;
        kernels::scale(x->value.data() + r * cols, ir, out.data() + r * cols,
                       cols);
    }
    return make_node(
        std::move(out), {x}, [rows, cols, inv_r](Node& self) {
            Node& x = *self.parents[0];
            if (!x.requires_grad) return;
            Tensor& gx = x.ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const double* xr = x.value.data() + r * cols;
                const double* gr = self.grad.data() + r * cols;
                double* out = gx.data() + r * cols;
                const double ir = inv_r[r];
                const double gdotx = kernels::dot(gr, xr, cols);
                const double coef =
                    gdotx * ir * ir * ir / static_cast<double>(cols);
                for (int64_t c = 0; c < cols; ++c)
                    out[c] += gr[c] * ir - coef * xr[c];
            }
        });
}

Var softmax_rows(const Var& x) {
    check_rank2(x, "softmax_rows");
    const int64_t rows = x->value.dim(0), cols = x->value.dim(1);
    Tensor out(x->value.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x->value.data() + r * cols;
        double* yr = out.data() + r * cols;
        double mx = xr[0];
        for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
        double z = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            z += yr[c];
        }
        const double iz = 1.0 / z;
        for (int64_t c = 0; c < cols; ++c) yr[c] *= iz;
    }
    Tensor probs = out;  // captured for backward
    return make_node(std::move(out), {x}, [rows, cols, probs](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        Tensor& gx = x.ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const double* p = probs.data() + r * cols;
            const double* g = self.grad.data() + r * cols;
            double* out = gx.data() + r * cols;
            const double gp = kernels::dot(g, p, cols);
            for (int64_t c = 0; c < cols; ++c) out[c] += p[c] * (g[c] - gp);
        }
    });
}

Var gelu_tanh(const Var& x) {
    const int64_t n = x->value.numel();
    Tensor out(x->value.shape());
    for (int64_t i = 0; i < n; ++i) {
        const double v = x->value[i];
        const double u = kGeluC * (v + kGeluA * v * v * v);
        out[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    return make_node(std::move(out), {x}, [n](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        Tensor& gx = x.ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            const double v = x.value[i];
            const double u = kGeluC * (v + kGeluA * v * v * v);
            const double th = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
            gx[i] += self.grad[i] * d;
        }
    });
}

Var scale_blocks(const Var& x, int64_t block, const std::vector<double>& s) {
    const int64_t n = x->value.numel();
    if (block <= 0 || n != block * static_cast<int64_t>(s.size()))
        throw ShapeError("scale_blocks: block layout mismatch");
    Tensor out(x->value.shape());
    for (size_t b = 0; b < s.size(); ++b)
        kernels::scale(x->value.data() + static_cast<int64_t>(b) * block, s[b],
                       out.data() + static_cast<int64_t>(b) * block, block);
    return make_node(std::move(out), {x}, [block, s](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        Tensor& gx = x.ensure_grad();
        for (size_t b = 0; b < s.size(); ++b)
            kernels::axpy(s[b],
                          self.grad.data() + static_cast<int64_t>(b) * block,
                          gx.data() + static_cast<int64_t>(b) * block, block);
    });
}

Var sum_all(const Var& x) {
    Tensor out = Tensor::scalar(kernels::sum(x->value.data(), x->value.numel()));
    return make_node(std::move(out), {x}, [](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        Tensor& gx = x.ensure_grad();
        const double g = self.grad[0];
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

Var mean_all(const Var& x) {
    const double inv = 1.0 / static_cast<double>(x->value.numel());
    Tensor out = Tensor::scalar(
        kernels::sum(x->value.data(), x->value.numel()) * inv);
    return make_node(std::move(out), {x}, [inv](Node& self) {
        Node& x = *self.parents[0];
        if (!x.requires_grad) return;
        Tensor& gx = x.ensure_grad();
        const double g = self.grad[0] * inv;
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

namespace {

// Token element (n, e) of batch image b maps to flat image index.
// grid = H/P patches per side, N = grid*grid tokens per image.
struct PatchMap {
    int64_t height, width, patch, grid, tokens, patch_len;

    PatchMap(int64_t h, int64_t w, int64_t p)
        : height(h), width(w), patch(p), grid(w / p),
          tokens((h / p) * (w / p)), patch_len(p * p * 3) {
        if (h % p != 0 || w % p != 0)
            throw ShapeError("image size not divisible by patch size");
    }

    int64_t image_index(int64_t token, int64_t elem) const {
        const int64_t gr = token / grid, gc = token % grid;
        const int64_t c = elem % 3;
        const int64_t pix = elem / 3;
        const int64_t py = pix / patch, px = pix % patch;
        const int64_t y = gr * patch + py, x = gc * patch + px;
        return (y * width + x) * 3 + c;
    }
};

}  // namespace

Var unpatchify(const Var& tokens, int64_t batch, int64_t height, int64_t width,
               int64_t patch) {
    check_rank2(tokens, "unpatchify");
    const PatchMap map(height, width, patch);
    if (tokens->value.dim(0) != batch * map.tokens ||
        tokens->value.dim(1) != map.patch_len)
        throw ShapeError("unpatchify: token tensor " +
                         tokens->value.shape_str() +
                         " does not match image layout");
    const int64_t img_elems = height * width * 3;
    Tensor out({batch, height, width, 3});
    for (int64_t b = 0; b < batch; ++b) {
        const double* tok = tokens->value.data() + b * map.tokens * map.patch_len;
        double* img = out.data() + b * img_elems;
        for (int64_t t = 0; t < map.tokens; ++t)
            for (int64_t e = 0; e < map.patch_len; ++e)
                img[map.image_index(t, e)] = tok[t * map.patch_len + e];
    }
    return make_node(std::move(out), {tokens},
                     [batch, map, img_elems](Node& self) {
                         Node& tokens = *self.parents[0];
                         if (!tokens.requires_grad) return;
                         Tensor& gt = tokens.ensure_grad();
                         for (int64_t b = 0; b < batch; ++b) {
                             double* tok =
                                 gt.data() + b * map.tokens * map.patch_len;
                             const double* img =
                                 self.grad.data() + b * img_elems;
                             for (int64_t t = 0; t < map.tokens; ++t)
                                 for (int64_t e = 0; e < map.patch_len; ++e)
                                     tok[t * map.patch_len + e] +=
                                         img[map.image_index(t, e)];
                         }
                     });
}

void backward(const Var& loss) {
    if (!loss) throw StateError("backward: null loss");
    if (loss->value.numel() != 1)
        throw ShapeError("backward expects a scalar loss, got " +
                         loss->value.shape_str());
    if (!loss->requires_grad)
        throw StateError(
            "backward: loss does not depend on any differentiable leaf");

    // Iterative topological sort (graphs can be deep).
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next].get();
            ++next;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad.fill(1.0);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_op && n->grad_ready) n->backward_op(*n);
    }
}

}  // namespace wayflow::ag
