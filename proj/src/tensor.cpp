#include "hloblab/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hloblab::nn {

namespace {

thread_local bool g_grad_enabled = true;

template <typename Real>
using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MapR = Eigen::Map<MatR<Real>>;
template <typename Real>
using CMapR = Eigen::Map<const MatR<Real>>;
template <typename Real>
using CVec = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>;
template <typename Real>
using Vec = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>;

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
    throw Error(ErrorCode::ShapeMismatch, op + ": " + detail);
}

template <typename Real>
void require_rank(const Tensor<Real>& t, std::size_t rank, const char* op, const char* what) {
    if (!t.defined() || t.rank() != rank) {
        shape_error(op, std::string(what) + " must have rank " + std::to_string(rank) +
                            (t.defined() ? ", got " + shape_string(t.shape()) : ", got undefined"));
    }
}

template <typename Real>
Real sigmoid(Real x) {
    return Real(1) / (Real(1) + std::exp(-x));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

std::uint64_t detail::next_tape_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Real>
Tensor<Real>::Tensor(Shape shape, Real fill, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
    node_->tape_id = detail::next_tape_id();
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> values, bool requires_grad) : node_(std::make_shared<Node>()) {
    if (values.size() != shape_numel(shape)) {
        shape_error("tensor", "shape " + shape_string(shape) + " does not hold " + std::to_string(values.size()) +
                                  " values");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
    node_->tape_id = detail::next_tape_id();
}

template <typename Real>
Real Tensor<Real>::item() const {
    if (numel() != 1) {
        shape_error("item", "tensor of shape " + shape_string(shape()) + " is not a scalar");
    }
    return node_->value[0];
}

template <typename Real>
void Tensor<Real>::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), Real{0});
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
    return Tensor(node_->shape, node_->value, false);
}

template <typename Real>
Tensor<Real> Tensor<Real>::make_result(Shape shape, std::vector<Real> values, const std::vector<Tensor>& parents,
                                       BackwardFn backward) {
    Tensor out(std::move(shape), std::move(values), false);
    if (!g_grad_enabled) {
        return out;
    }
    const bool tracked =
        std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.defined() && p.requires_grad(); });
    if (tracked) {
        out.node_->requires_grad = true;
        for (const auto& p : parents) {
            out.node_->parents.push_back(p.node_);
        }
        out.node_->backward = std::move(backward);
    }
    return out;
}

template <typename Real>
void Tensor<Real>::backward() {
    if (numel() != 1) {
        shape_error("backward", "only scalars can seed a reverse sweep, got " + shape_string(shape()));
    }
    if (!node_->requires_grad) {
        return;
    }
    // Tape ids increase with creation, so descending id is a reverse topological order.
    std::vector<Node*> order;
    std::vector<Node*> stack{node_.get()};
    std::vector<const Node*> seen;
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (std::find(seen.begin(), seen.end(), n) != seen.end()) {
            continue;
        }
        seen.push_back(n);
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p && p->requires_grad) {
                stack.push_back(p.get());
            }
        }
    }
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->tape_id > b->tape_id; });
    node_->ensure_grad();
    node_->grad[0] += Real{1};
    for (Node* n : order) {
        if (n->backward) {
            n->ensure_grad();
            n->backward(*n);
        }
    }
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

struct ConvGeometry {
    std::size_t n, c, h, w, o, kh, kw, oh, ow;
};

template <typename Real>
void im2col(const Real* x, const ConvGeometry& g, const Conv2dOptions& opt, Real* cols) {
    const std::size_t p = g.oh * g.ow;
    for (std::size_t c = 0; c < g.c; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                Real* row = cols + ((c * g.kh + i) * g.kw + j) * p;
                for (std::size_t y = 0; y < g.oh; ++y) {
                    const auto sy = static_cast<std::ptrdiff_t>(y * opt.stride_h + i) -
                                    static_cast<std::ptrdiff_t>(opt.pad_top);
                    Real* dst = row + y * g.ow;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) {
                        std::fill(dst, dst + g.ow, Real{0});
                        continue;
                    }
                    const Real* src = x + (c * g.h + static_cast<std::size_t>(sy)) * g.w;
                    for (std::size_t xo = 0; xo < g.ow; ++xo) {
                        const auto sx = static_cast<std::ptrdiff_t>(xo * opt.stride_w + j) -
                                        static_cast<std::ptrdiff_t>(opt.pad_left);
                        dst[xo] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.w)) ? Real{0}
                                                                                     : src[static_cast<std::size_t>(sx)];
                    }
                }
            }
        }
    }
}

template <typename Real>
void col2im_add(const Real* cols, const ConvGeometry& g, const Conv2dOptions& opt, Real* dx) {
    const std::size_t p = g.oh * g.ow;
    for (std::size_t c = 0; c < g.c; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                const Real* row = cols + ((c * g.kh + i) * g.kw + j) * p;
                for (std::size_t y = 0; y < g.oh; ++y) {
                    const auto sy = static_cast<std::ptrdiff_t>(y * opt.stride_h + i) -
                                    static_cast<std::ptrdiff_t>(opt.pad_top);
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) {
                        continue;
                    }
                    Real* dst = dx + (c * g.h + static_cast<std::size_t>(sy)) * g.w;
                    const Real* src = row + y * g.ow;
                    for (std::size_t xo = 0; xo < g.ow; ++xo) {
                        const auto sx = static_cast<std::ptrdiff_t>(xo * opt.stride_w + j) -
                                        static_cast<std::ptrdiff_t>(opt.pad_left);
                        if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(g.w)) {
                            dst[static_cast<std::size_t>(sx)] += src[xo];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& weight, const Tensor<Real>& bias,
                    const Conv2dOptions& opt) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(weight, 4, "conv2d", "weight");
    if (opt.stride_h == 0 || opt.stride_w == 0) {
        shape_error("conv2d", "strides must be positive");
    }
    ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), weight.dim(2),
                   weight.dim(3), 0, 0};
    if (weight.dim(1) != g.c) {
        shape_error("conv2d", "weight " + shape_string(weight.shape()) + " expects " + std::to_string(weight.dim(1)) +
                                  " input channels, input " + shape_string(input.shape()));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.o)) {
        shape_error("conv2d", "bias must have length " + std::to_string(g.o));
    }
    const std::size_t ph = g.h + opt.pad_top + opt.pad_bottom;
    const std::size_t pw = g.w + opt.pad_left + opt.pad_right;
    if (ph < g.kh || pw < g.kw) {
        shape_error("conv2d", "kernel larger than padded input");
    }
    g.oh = (ph - g.kh) / opt.stride_h + 1;
    g.ow = (pw - g.kw) / opt.stride_w + 1;

    const std::size_t k = g.c * g.kh * g.kw;
    const std::size_t p = g.oh * g.ow;
    std::vector<Real> out(g.n * g.o * p);
    std::vector<Real> cols(k * p);
    CMapR<Real> wmat(weight.data().data(), static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(k));
    const Real* x = input.data().data();
    for (std::size_t n = 0; n < g.n; ++n) {
        im2col(x + n * g.c * g.h * g.w, g, opt, cols.data());
        CMapR<Real> cm(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        MapR<Real> y(out.data() + n * g.o * p, static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(p));
        y.noalias() = wmat * cm;
        if (bias.defined()) {
            y.colwise() += CVec<Real>(bias.data().data(), static_cast<Eigen::Index>(g.o));
        }
    }

    return Tensor<Real>::make_result(
        {g.n, g.o, g.oh, g.ow}, std::move(out), {input, weight, bias}, [g, opt, k, p](detail::Node<Real>& self) {
            auto& in = *self.parents[0];
            auto& w = *self.parents[1];
            const auto& b = self.parents[2];
            CMapR<Real> wmat(w.value.data(), static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(k));
            std::vector<Real> cols(k * p);
            MatR<Real> dcols(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
            for (std::size_t n = 0; n < g.n; ++n) {
                CMapR<Real> gy(self.grad.data() + n * g.o * p, static_cast<Eigen::Index>(g.o),
                               static_cast<Eigen::Index>(p));
                if (w.requires_grad) {
                    im2col(in.value.data() + n * g.c * g.h * g.w, g, opt, cols.data());
                    CMapR<Real> cm(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
                    MapR<Real> gw(w.ensure_grad().data(), static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(k));
                    gw.noalias() += gy * cm.transpose();
                }
                if (b && b->requires_grad) {
                    Vec<Real>(b->ensure_grad().data(), static_cast<Eigen::Index>(g.o)) += gy.rowwise().sum();
                }
                if (in.requires_grad) {
                    dcols.noalias() = wmat.transpose() * gy;
                    col2im_add(dcols.data(), g, opt, in.ensure_grad().data() + n * g.c * g.h * g.w);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// elementwise

template <typename Real>
Tensor<Real> leaky_relu(const Tensor<Real>& x, Real slope) {
    std::vector<Real> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = in[i] >= Real{0} ? in[i] : slope * in[i];
    }
    return Tensor<Real>::make_result(x.shape(), std::move(out), {x}, [slope](detail::Node<Real>& self) {
        auto& in = *self.parents[0];
        auto& g = in.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * (in.value[i] >= Real{0} ? Real{1} : slope);
        }
    });
}

template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double rate, Mode mode, std::mt19937_64& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "dropout rate must be in [0, 1)");
    }
    if (mode == Mode::Eval || rate == 0.0) {
        return x;
    }
    const Real scale = static_cast<Real>(1.0 / (1.0 - rate));
    std::bernoulli_distribution keep(1.0 - rate);
    auto mask = std::make_shared<std::vector<Real>>(x.numel());
    std::vector<Real> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = keep(rng) ? scale : Real{0};
        out[i] = in[i] * (*mask)[i];
    }
    return Tensor<Real>::make_result(x.shape(), std::move(out), {x}, [mask](detail::Node<Real>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * (*mask)[i];
        }
    });
}

// ---------------------------------------------------------------------------
// linear

template <typename Real>
Tensor<Real> linear(const Tensor<Real>& input, const Tensor<Real>& weight, const Tensor<Real>& bias) {
    require_rank(input, 2, "linear", "input");
    require_rank(weight, 2, "linear", "weight");
    const std::size_t n = input.dim(0);
    const std::size_t in_features = input.dim(1);
    const std::size_t out_features = weight.dim(0);
    if (weight.dim(1) != in_features) {
        shape_error("linear", "weight " + shape_string(weight.shape()) + " vs input " + shape_string(input.shape()));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_features)) {
        shape_error("linear", "bias must have length " + std::to_string(out_features));
    }
    const auto ni = static_cast<Eigen::Index>(n);
    const auto ii = static_cast<Eigen::Index>(in_features);
    const auto oi = static_cast<Eigen::Index>(out_features);
    std::vector<Real> out(n * out_features);
    MapR<Real> y(out.data(), ni, oi);
    y.noalias() = CMapR<Real>(input.data().data(), ni, ii) * CMapR<Real>(weight.data().data(), oi, ii).transpose();
    if (bias.defined()) {
        y.rowwise() += CVec<Real>(bias.data().data(), oi).transpose();
    }
    return Tensor<Real>::make_result({n, out_features}, std::move(out), {input, weight, bias},
                                     [ni, ii, oi](detail::Node<Real>& self) {
                                         auto& x = *self.parents[0];
                                         auto& w = *self.parents[1];
                                         const auto& b = self.parents[2];
                                         CMapR<Real> gy(self.grad.data(), ni, oi);
                                         if (x.requires_grad) {
                                             MapR<Real>(x.ensure_grad().data(), ni, ii).noalias() +=
                                                 gy * CMapR<Real>(w.value.data(), oi, ii);
                                         }
                                         if (w.requires_grad) {
                                             MapR<Real>(w.ensure_grad().data(), oi, ii).noalias() +=
                                                 gy.transpose() * CMapR<Real>(x.value.data(), ni, ii);
                                         }
                                         if (b && b->requires_grad) {
                                             Vec<Real>(b->ensure_grad().data(), oi) += gy.colwise().sum().transpose();
                                         }
                                     });
}

// ---------------------------------------------------------------------------
// lstm

namespace {

template <typename Real>
struct LstmCache {
    std::size_t n, t, in, hidden;
    MatR<Real> gates;  // (t * n) x 4H post-activation, step-major
    MatR<Real> cells;  // (t * n) x H
    MatR<Real> tanh_cells;
};

}  // namespace

template <typename Real>
LstmOutput<Real> lstm(const Tensor<Real>& input, const Tensor<Real>& weight_ih, const Tensor<Real>& weight_hh,
                      const Tensor<Real>& bias_ih, const Tensor<Real>& bias_hh) {
    require_rank(input, 3, "lstm", "input");
    require_rank(weight_ih, 2, "lstm", "weight_ih");
    require_rank(weight_hh, 2, "lstm", "weight_hh");
    require_rank(bias_ih, 1, "lstm", "bias_ih");
    require_rank(bias_hh, 1, "lstm", "bias_hh");
    const std::size_t n = input.dim(0);
    const std::size_t steps = input.dim(1);
    const std::size_t in = input.dim(2);
    const std::size_t hidden = weight_hh.dim(1);
    if (weight_ih.dim(0) != 4 * hidden || weight_ih.dim(1) != in || weight_hh.dim(0) != 4 * hidden ||
        bias_ih.dim(0) != 4 * hidden || bias_hh.dim(0) != 4 * hidden) {
        shape_error("lstm", "inconsistent parameter shapes for input " + shape_string(input.shape()));
    }
    if (steps == 0) {
        shape_error("lstm", "sequence length must be positive");
    }
    const auto N = static_cast<Eigen::Index>(n);
    const auto H = static_cast<Eigen::Index>(hidden);
    const auto I = static_cast<Eigen::Index>(in);
    const auto T = static_cast<Eigen::Index>(steps);

    auto cache = std::make_shared<LstmCache<Real>>();
    *cache = LstmCache<Real>{n, steps, in, hidden, MatR<Real>(T * N, 4 * H), MatR<Real>(T * N, H), MatR<Real>(T * N, H)};

    CMapR<Real> x_all(input.data().data(), N * T, I);  // row n*T + t
    const MatR<Real> projected = x_all * CMapR<Real>(weight_ih.data().data(), 4 * H, I).transpose();
    const Eigen::Matrix<Real, 1, Eigen::Dynamic> bias =
        (CVec<Real>(bias_ih.data().data(), 4 * H) + CVec<Real>(bias_hh.data().data(), 4 * H)).transpose();
    CMapR<Real> whh(weight_hh.data().data(), 4 * H, H);

    std::vector<Real> out(n * steps * hidden);
    MatR<Real> h = MatR<Real>::Zero(N, H);
    MatR<Real> c = MatR<Real>::Zero(N, H);
    MatR<Real> pre(N, 4 * H);
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index b = 0; b < N; ++b) {
            pre.row(b) = projected.row(b * T + t) + bias;
        }
        pre.noalias() += h * whh.transpose();
        auto gates = cache->gates.middleRows(t * N, N);
        for (Eigen::Index b = 0; b < N; ++b) {
            for (Eigen::Index j = 0; j < H; ++j) {
                const Real ig = sigmoid(pre(b, j));
                const Real fg = sigmoid(pre(b, H + j));
                const Real gg = std::tanh(pre(b, 2 * H + j));
                const Real og = sigmoid(pre(b, 3 * H + j));
                gates(b, j) = ig;
                gates(b, H + j) = fg;
                gates(b, 2 * H + j) = gg;
                gates(b, 3 * H + j) = og;
                c(b, j) = fg * c(b, j) + ig * gg;
                const Real tc = std::tanh(c(b, j));
                cache->cells(t * N + b, j) = c(b, j);
                cache->tanh_cells(t * N + b, j) = tc;
                h(b, j) = og * tc;
                out[(static_cast<std::size_t>(b) * steps + static_cast<std::size_t>(t)) * hidden +
                    static_cast<std::size_t>(j)] = h(b, j);
            }
        }
    }

    auto output = Tensor<Real>::make_result(
        {n, steps, hidden}, std::move(out), {input, weight_ih, weight_hh, bias_ih, bias_hh},
        [cache, N, H, I, T](detail::Node<Real>& self) {
            auto& x = *self.parents[0];
            auto& wih = *self.parents[1];
            auto& whh_node = *self.parents[2];
            auto& bih = *self.parents[3];
            auto& bhh = *self.parents[4];
            CMapR<Real> whh(whh_node.value.data(), 4 * H, H);
            MatR<Real> dpre_all(N * T, 4 * H);  // row n*T + t, matches x_all
            MatR<Real> dh_next = MatR<Real>::Zero(N, H);
            MatR<Real> dc_next = MatR<Real>::Zero(N, H);
            MatR<Real> dpre(N, 4 * H);
            MatR<Real> gwhh = MatR<Real>::Zero(4 * H, H);
            Eigen::Matrix<Real, 1, Eigen::Dynamic> gbias = Eigen::Matrix<Real, 1, Eigen::Dynamic>::Zero(4 * H);
            MatR<Real> h_prev(N, H);
            for (Eigen::Index t = T - 1; t >= 0; --t) {
                const auto gates = cache->gates.middleRows(t * N, N);
                for (Eigen::Index b = 0; b < N; ++b) {
                    for (Eigen::Index j = 0; j < H; ++j) {
                        const Real ig = gates(b, j);
                        const Real fg = gates(b, H + j);
                        const Real gg = gates(b, 2 * H + j);
                        const Real og = gates(b, 3 * H + j);
                        const Real tc = cache->tanh_cells(t * N + b, j);
                        const Real c_prev = t > 0 ? cache->cells((t - 1) * N + b, j) : Real{0};
                        const Real dh = self.grad[static_cast<std::size_t>((b * T + t) * H + j)] + dh_next(b, j);
                        const Real dc = dh * og * (Real{1} - tc * tc) + dc_next(b, j);
                        dpre(b, j) = dc * gg * ig * (Real{1} - ig);
                        dpre(b, H + j) = dc * c_prev * fg * (Real{1} - fg);
                        dpre(b, 2 * H + j) = dc * ig * (Real{1} - gg * gg);
                        dpre(b, 3 * H + j) = dh * tc * og * (Real{1} - og);
                        dc_next(b, j) = dc * fg;
                        h_prev(b, j) = t > 0 ? cache->gates((t - 1) * N + b, 3 * H + j) * cache->tanh_cells((t - 1) * N + b, j)
                                             : Real{0};
                    }
                }
                gwhh.noalias() += dpre.transpose() * h_prev;
                gbias += dpre.colwise().sum();
                dh_next.noalias() = dpre * whh;
                for (Eigen::Index b = 0; b < N; ++b) {
                    dpre_all.row(b * T + t) = dpre.row(b);
                }
            }
            if (whh_node.requires_grad) {
                MapR<Real>(whh_node.ensure_grad().data(), 4 * H, H) += gwhh;
            }
            if (bih.requires_grad) {
                Vec<Real>(bih.ensure_grad().data(), 4 * H) += gbias.transpose();
            }
            if (bhh.requires_grad) {
                Vec<Real>(bhh.ensure_grad().data(), 4 * H) += gbias.transpose();
            }
            if (wih.requires_grad) {
                MapR<Real>(wih.ensure_grad().data(), 4 * H, I).noalias() +=
                    dpre_all.transpose() * CMapR<Real>(x.value.data(), N * T, I);
            }
            if (x.requires_grad) {
                MapR<Real>(x.ensure_grad().data(), N * T, I).noalias() +=
                    dpre_all * CMapR<Real>(wih.value.data(), 4 * H, I);
            }
        });

    std::vector<Real> c_last(c.data(), c.data() + c.size());
    LstmOutput<Real> result{output, last_timestep(output), Tensor<Real>({n, hidden}, std::move(c_last), false)};
    return result;
}

// ---------------------------------------------------------------------------
// reshaping

template <typename Real>
Tensor<Real> last_timestep(const Tensor<Real>& x) {
    require_rank(x, 3, "last_timestep", "input");
    const std::size_t n = x.dim(0);
    const std::size_t t = x.dim(1);
    const std::size_t h = x.dim(2);
    std::vector<Real> out(n * h);
    for (std::size_t b = 0; b < n; ++b) {
        std::copy_n(x.data().data() + (b * t + t - 1) * h, h, out.data() + b * h);
    }
    return Tensor<Real>::make_result({n, h}, std::move(out), {x}, [n, t, h](detail::Node<Real>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t j = 0; j < h; ++j) {
                g[(b * t + t - 1) * h + j] += self.grad[b * h + j];
            }
        }
    });
}

template <typename Real>
Tensor<Real> channels_to_sequence(const Tensor<Real>& x) {
    require_rank(x, 4, "channels_to_sequence", "input");
    if (x.dim(3) != 1) {
        shape_error("channels_to_sequence", "expected width 1, got " + shape_string(x.shape()));
    }
    const std::size_t n = x.dim(0);
    const std::size_t c = x.dim(1);
    const std::size_t t = x.dim(2);
    std::vector<Real> out(n * t * c);
    const auto in = x.data();
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t s = 0; s < t; ++s) {
                out[(b * t + s) * c + ch] = in[(b * c + ch) * t + s];
            }
        }
    }
    return Tensor<Real>::make_result({n, t, c}, std::move(out), {x}, [n, c, t](detail::Node<Real>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t s = 0; s < t; ++s) {
                    g[(b * c + ch) * t + s] += self.grad[(b * t + s) * c + ch];
                }
            }
        }
    });
}

template <typename Real>
Tensor<Real> concat_last(const std::vector<Tensor<Real>>& parts) {
    if (parts.empty()) {
        shape_error("concat_last", "nothing to concatenate");
    }
    const std::size_t n = parts.front().dim(0);
    const std::size_t t = parts.front().dim(1);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_rank(p, 3, "concat_last", "part");
        if (p.dim(0) != n || p.dim(1) != t) {
            shape_error("concat_last", "leading extents differ: " + shape_string(p.shape()));
        }
        widths.push_back(p.dim(2));
        total += p.dim(2);
    }
    std::vector<Real> out(n * t * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto src = parts[k].data();
        for (std::size_t row = 0; row < n * t; ++row) {
            std::copy_n(src.data() + row * widths[k], widths[k], out.data() + row * total + offset);
        }
        offset += widths[k];
    }
    return Tensor<Real>::make_result({n, t, total}, std::move(out), parts,
                                     [n, t, total, widths](detail::Node<Real>& self) {
                                         std::size_t off = 0;
                                         for (std::size_t k = 0; k < widths.size(); ++k) {
                                             auto& p = *self.parents[k];
                                             if (p.requires_grad) {
                                                 auto& g = p.ensure_grad();
                                                 for (std::size_t row = 0; row < n * t; ++row) {
                                                     for (std::size_t j = 0; j < widths[k]; ++j) {
                                                         g[row * widths[k] + j] += self.grad[row * total + off + j];
                                                     }
                                                 }
                                             }
                                             off += widths[k];
                                         }
                                     });
}

template <typename Real>
Tensor<Real> gather_last(const Tensor<Real>& x, std::span<const std::size_t> columns) {
    if (!x.defined() || x.rank() == 0) {
        shape_error("gather_last", "input must have rank >= 1");
    }
    const std::size_t width = x.shape().back();
    for (auto c : columns) {
        if (c >= width) {
            throw Error(ErrorCode::IndexOutOfRange, "gather column " + std::to_string(c) + " >= " + std::to_string(width));
        }
    }
    const std::size_t rows = x.numel() / width;
    const std::size_t out_w = columns.size();
    std::vector<std::size_t> map(columns.begin(), columns.end());
    std::vector<Real> out(rows * out_w);
    const auto in = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < out_w; ++k) {
            out[r * out_w + k] = in[r * width + map[k]];
        }
    }
    Shape shape = x.shape();
    shape.back() = out_w;
    return Tensor<Real>::make_result(std::move(shape), std::move(out), {x},
                                     [rows, width, out_w, map](detail::Node<Real>& self) {
                                         auto& g = self.parents[0]->ensure_grad();
                                         for (std::size_t r = 0; r < rows; ++r) {
                                             for (std::size_t k = 0; k < out_w; ++k) {
                                                 g[r * width + map[k]] += self.grad[r * out_w + k];
                                             }
                                         }
                                     });
}

// ---------------------------------------------------------------------------
// losses and reductions

template <typename Real>
std::vector<Real> softmax_rows(std::span<const Real> logits, std::size_t classes) {
    if (classes == 0 || logits.size() % classes != 0) {
        shape_error("softmax", "logit buffer is not a multiple of the class count");
    }
    std::vector<Real> out(logits.size());
    for (std::size_t r = 0; r < logits.size() / classes; ++r) {
        const Real* z = logits.data() + r * classes;
        Real* p = out.data() + r * classes;
        const Real m = *std::max_element(z, z + classes);
        Real sum{0};
        for (std::size_t k = 0; k < classes; ++k) {
            p[k] = std::exp(z[k] - m);
            sum += p[k];
        }
        for (std::size_t k = 0; k < classes; ++k) {
            p[k] /= sum;
        }
    }
    return out;
}

template <typename Real>
Tensor<Real> softmax_cross_entropy(const Tensor<Real>& logits, std::span<const int> labels) {
    require_rank(logits, 2, "softmax_cross_entropy", "logits");
    const std::size_t n = logits.dim(0);
    const std::size_t k = logits.dim(1);
    if (labels.size() != n) {
        shape_error("softmax_cross_entropy", std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
    }
    if (n == 0) {
        shape_error("softmax_cross_entropy", "empty batch");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw Error(ErrorCode::BadLabel, "label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
        }
    }
    auto probs = std::make_shared<std::vector<Real>>(softmax_rows(logits.data(), k));
    const auto z = logits.data();
    Real loss{0};
    for (std::size_t r = 0; r < n; ++r) {
        const Real* row = z.data() + r * k;
        const Real m = *std::max_element(row, row + k);
        Real sum{0};
        for (std::size_t j = 0; j < k; ++j) {
            sum += std::exp(row[j] - m);
        }
        // -log softmax = log-sum-exp - z_y, both shifted by the row max
        loss += std::log(sum) - (row[labels[r]] - m);
    }
    loss /= static_cast<Real>(n);
    std::vector<int> y(labels.begin(), labels.end());
    return Tensor<Real>::make_result({1}, {loss}, {logits}, [probs, y, n, k](detail::Node<Real>& self) {
        auto& g = self.parents[0]->ensure_grad();
        const Real scale = self.grad[0] / static_cast<Real>(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < k; ++j) {
                const Real onehot = static_cast<std::size_t>(y[r]) == j ? Real{1} : Real{0};
                g[r * k + j] += scale * ((*probs)[r * k + j] - onehot);
            }
        }
    });
}

template <typename Real>
Tensor<Real> sum_squares(const Tensor<Real>& x) {
    Real s{0};
    for (Real v : x.data()) {
        s += v * v;
    }
    return Tensor<Real>::make_result({1}, {s}, {x}, [](detail::Node<Real>& self) {
        auto& in = *self.parents[0];
        auto& g = in.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[0] * Real{2} * in.value[i];
        }
    });
}

template <typename Real>
Tensor<Real> weighted_sum(const Tensor<Real>& x, std::span<const Real> coefficients) {
    if (coefficients.size() != x.numel()) {
        shape_error("weighted_sum", "coefficient count differs from element count");
    }
    Real s{0};
    const auto v = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += coefficients[i] * v[i];
    }
    std::vector<Real> coeff(coefficients.begin(), coefficients.end());
    return Tensor<Real>::make_result({1}, {s}, {x}, [coeff](detail::Node<Real>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[0] * coeff[i];
        }
    });
}

#define HLOBLAB_INSTANTIATE(Real)                                                                                    \
    template class Tensor<Real>;                                                                                     \
    template Tensor<Real> conv2d(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,                      \
                                 const Conv2dOptions&);                                                              \
    template Tensor<Real> leaky_relu(const Tensor<Real>&, Real);                                                     \
    template Tensor<Real> dropout(const Tensor<Real>&, double, Mode, std::mt19937_64&);                              \
    template Tensor<Real> linear(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);                     \
    template LstmOutput<Real> lstm(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,                    \
                                   const Tensor<Real>&, const Tensor<Real>&);                                        \
    template Tensor<Real> last_timestep(const Tensor<Real>&);                                                        \
    template Tensor<Real> channels_to_sequence(const Tensor<Real>&);                                                 \
    template Tensor<Real> concat_last(const std::vector<Tensor<Real>>&);                                             \
    template Tensor<Real> gather_last(const Tensor<Real>&, std::span<const std::size_t>);                            \
    template Tensor<Real> softmax_cross_entropy(const Tensor<Real>&, std::span<const int>);                          \
    template Tensor<Real> sum_squares(const Tensor<Real>&);                                                          \
    template Tensor<Real> weighted_sum(const Tensor<Real>&, std::span<const Real>);                                  \
    template std::vector<Real> softmax_rows(std::span<const Real>, std::size_t);

HLOBLAB_INSTANTIATE(float)
HLOBLAB_INSTANTIATE(double)
HLOBLAB_INSTANTIATE(long double)

#undef HLOBLAB_INSTANTIATE

}  // namespace hloblab::nn
