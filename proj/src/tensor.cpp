#include "selfsense/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <cstring>
#include <sstream>

#include "selfsense/parallel.hpp"

namespace selfsense {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::atomic<int64_t> g_next_id{1};

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw DimensionError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

thread_local Tape* g_active_tape = nullptr;

// Batch chunk size for conv parallelism. Fixed so that chunk boundaries (and
// therefore reduction order) never depend on the worker count.
constexpr int64_t kConvChunk = 8;

std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

void check_rank(const Tensor& t, int rank, const char* op, const char* arg) {
    if (t.rank() != rank) {
        std::ostringstream os;
        os << op << ": " << arg << " must have rank " << rank << ", got shape "
           << shape_str(t.shape());
        throw DimensionError(os.str());
    }
}

// Scratch reused across calls within a worker thread.
thread_local std::vector<float> tl_col;

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor make_tensor(std::vector<int64_t> shape, bool requires_grad) {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data.resize(static_cast<size_t>(shape_numel(t.impl_->shape)));
    t.impl_->requires_grad = requires_grad;
    t.impl_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return t;
}

Tensor Tensor::empty(std::vector<int64_t> shape, bool requires_grad) {
    return make_tensor(std::move(shape), requires_grad);
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
    Tensor t = make_tensor(std::move(shape), requires_grad);
    std::fill(t.data().begin(), t.data().end(), 0.0f);
    return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, float value, bool requires_grad) {
    Tensor t = make_tensor(std::move(shape), requires_grad);
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<float> data,
                         bool requires_grad) {
    const int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(data.size())) {
        std::ostringstream os;
        os << "from_data: shape " << shape_str(shape) << " needs " << n << " values, got "
           << data.size();
        throw DimensionError(os.str());
    }
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(data.begin(), data.end());
    t.impl_->requires_grad = requires_grad;
    t.impl_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return t;
}

Tensor Tensor::uniform(std::vector<int64_t> shape, float lo, float hi, Rng& rng,
                       bool requires_grad) {
    Tensor t = make_tensor(std::move(shape), requires_grad);
    for (float& v : t.impl_->data) v = rng.uniform_float(lo, hi);
    return t;
}

Tensor Tensor::he_uniform(std::vector<int64_t> shape, int64_t fan_in, Rng& rng,
                          bool requires_grad) {
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    return uniform(std::move(shape), -bound, bound, rng, requires_grad);
}

std::span<float> Tensor::grad() {
    if (!impl_->grad) throw ValidationError("tensor has no gradient populated");
    return *impl_->grad;
}

std::span<const float> Tensor::grad() const {
    if (!impl_->grad) throw ValidationError("tensor has no gradient populated");
    return *impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0f);
}

float Tensor::item() const {
    if (numel() != 1) {
        throw DimensionError("item: tensor is not scalar, shape " + shape_str(shape()));
    }
    return impl_->data[0];
}

float Tensor::at(std::initializer_list<int64_t> idx) const {
    if (static_cast<int>(idx.size()) != rank()) {
        throw DimensionError("at: index rank mismatch");
    }
    int64_t flat = 0;
    int axis = 0;
    for (int64_t i : idx) {
        flat = flat * impl_->shape[static_cast<size_t>(axis)] + i;
        ++axis;
    }
    return impl_->data[static_cast<size_t>(flat)];
}

Tensor Tensor::clone() const {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    t.impl_->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return t;
}

// ---- Tape ------------------------------------------------------------------

const char* op_kind_name(OpKind kind) {
    switch (kind) {
        case OpKind::Conv2d: return "conv2d";
        case OpKind::Linear: return "linear";
        case OpKind::Relu: return "relu";
        case OpKind::Add: return "add";
        case OpKind::BatchNorm: return "batchnorm2d";
        case OpKind::AvgPool2x2: return "avg_pool2x2";
        case OpKind::GlobalAvgPool: return "global_avg_pool";
        case OpKind::Concat: return "concat";
        case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case OpKind::Select: return "select";
    }
    return "?";
}

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(TapeNode node) { nodes_.push_back(std::move(node)); }

const FloatVec* Tape::grad_of(const Tensor& t) const {
    if (t.is_leaf()) {
        return t.impl()->grad.get();
    }
    const auto it = flow_.find(t.id());
    return it == flow_.end() ? nullptr : &it->second;
}

float* Tape::grad_sink(const Tensor& t) {
    if (t.is_leaf()) {
        if (!t.requires_grad()) return nullptr;
        auto* impl = t.impl();
        if (!impl->grad) {
            impl->grad = std::make_unique<FloatVec>(impl->data.size(), 0.0f);
        }
        return impl->grad->data();
    }
    auto [it, inserted] =
        flow_.try_emplace(t.id(), t.impl()->data.size(), 0.0f);
    return it->second.data();
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw DimensionError("backward: loss must be scalar, shape " +
                             shape_str(loss.shape()));
    }
    bool on_tape = false;
    for (const auto& n : nodes_) {
        if (n.output_id == loss.id()) {
            on_tape = true;
            break;
        }
    }
    if (!on_tape) throw ValidationError("backward: loss was not produced on this tape");

    flow_.clear();
    flow_.emplace(loss.id(), FloatVec{1.0f});
    static const bool profile = std::getenv("SELFSENSE_PROFILE_BACKWARD") != nullptr;
    if (profile) {
        static double acc[16] = {};
        static int64_t calls = 0;
        for (size_t i = nodes_.size(); i-- > 0;) {
            if (flow_.find(nodes_[i].output_id) == flow_.end()) continue;
            const auto t0 = std::chrono::steady_clock::now();
            nodes_[i].backward(*this);
            acc[static_cast<size_t>(nodes_[i].kind)] +=
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
        }
        if (++calls % 50 == 0) {
            std::fprintf(stderr, "[backward profile over %lld calls]\n",
                         static_cast<long long>(calls));
            for (int k = 0; k < 16; ++k) {
                if (acc[k] > 0) {
                    std::fprintf(stderr, "  %-22s %8.2f ms/call\n",
                                 op_kind_name(static_cast<OpKind>(k)),
                                 1000.0 * acc[k] / static_cast<double>(calls));
                }
            }
        }
    } else {
        for (size_t i = nodes_.size(); i-- > 0;) {
            if (flow_.find(nodes_[i].output_id) != flow_.end()) nodes_[i].backward(*this);
        }
    }
    flow_.clear();
}

namespace {

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (Tape::active() == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

Tensor make_output(std::vector<int64_t> shape, bool track) {
    Tensor out = make_tensor(std::move(shape), track);
    if (track) out.impl()->produced = true;
    return out;
}

void finish_record(OpKind kind, std::initializer_list<const Tensor*> inputs,
                   const Tensor& out, std::function<void(Tape&)> backward) {
    TapeNode node;
    node.kind = kind;
    for (const Tensor* t : inputs) node.input_ids.push_back(t->id());
    node.output_id = out.id();
    node.backward = std::move(backward);
    Tape::active()->record(std::move(node));
}

}  // namespace

// ---- conv2d ----------------------------------------------------------------

namespace {

struct ConvDims {
    int64_t batch, in_c, in_h, in_w;
    int64_t out_c, k;
    int64_t out_h, out_w;
    int stride, padding;
    int64_t col_rows() const { return in_c * k * k; }
    int64_t col_cols() const { return out_h * out_w; }
};

ConvDims conv_dims(const Tensor& input, const Tensor& weight, const Tensor& bias,
                   int stride, int padding) {
    check_rank(input, 4, "conv2d", "input");
    check_rank(weight, 4, "conv2d", "weight");
    check_rank(bias, 1, "conv2d", "bias");
    if (stride < 1) throw ValidationError("conv2d: stride must be >= 1");
    if (padding < 0) throw ValidationError("conv2d: padding must be >= 0");
    ConvDims d;
    d.batch = input.size(0);
    d.in_c = input.size(1);
    d.in_h = input.size(2);
    d.in_w = input.size(3);
    d.out_c = weight.size(0);
    d.k = weight.size(2);
    d.stride = stride;
    d.padding = padding;
    if (weight.size(2) != weight.size(3)) {
        throw DimensionError("conv2d: kernel must be square, weight shape " +
                             shape_str(weight.shape()));
    }
    if (weight.size(1) != d.in_c) {
        std::ostringstream os;
        os << "conv2d: input channel axis (" << d.in_c << ") != weight in-channel axis ("
           << weight.size(1) << ")";
        throw DimensionError(os.str());
    }
    if (bias.size(0) != d.out_c) {
        std::ostringstream os;
        os << "conv2d: bias axis (" << bias.size(0) << ") != weight out-channel axis ("
           << d.out_c << ")";
        throw DimensionError(os.str());
    }
    d.out_h = (d.in_h + 2 * padding - d.k) / stride + 1;
    d.out_w = (d.in_w + 2 * padding - d.k) / stride + 1;
    if (d.in_h + 2 * padding < d.k || d.in_w + 2 * padding < d.k) {
        throw DimensionError("conv2d: kernel larger than padded input");
    }
    return d;
}

// Writes one sample's patch matrix into a K x row_stride buffer at the given
// column offset (col already points at that offset).
void im2col_strided(const float* x, const ConvDims& d, float* col, int64_t row_stride) {
    for (int64_t c = 0; c < d.in_c; ++c) {
        const float* xc = x + c * d.in_h * d.in_w;
        for (int64_t ki = 0; ki < d.k; ++ki) {
            for (int64_t kj = 0; kj < d.k; ++kj) {
                float* row = col + ((c * d.k + ki) * d.k + kj) * row_stride;
                for (int64_t oh = 0; oh < d.out_h; ++oh) {
                    const int64_t ih = oh * d.stride - d.padding + ki;
                    float* dst = row + oh * d.out_w;
                    if (ih < 0 || ih >= d.in_h) {
                        std::fill(dst, dst + d.out_w, 0.0f);
                        continue;
                    }
                    const float* src_row = xc + ih * d.in_w;
                    for (int64_t ow = 0; ow < d.out_w; ++ow) {
                        const int64_t iw = ow * d.stride - d.padding + kj;
                        dst[ow] = (iw < 0 || iw >= d.in_w) ? 0.0f : src_row[iw];
                    }
                }
            }
        }
    }
}

void col2im_add_strided(const float* col, const ConvDims& d, int64_t row_stride,
                        float* dx) {
    for (int64_t c = 0; c < d.in_c; ++c) {
        float* xc = dx + c * d.in_h * d.in_w;
        for (int64_t ki = 0; ki < d.k; ++ki) {
            for (int64_t kj = 0; kj < d.k; ++kj) {
                const float* row = col + ((c * d.k + ki) * d.k + kj) * row_stride;
                for (int64_t oh = 0; oh < d.out_h; ++oh) {
                    const int64_t ih = oh * d.stride - d.padding + ki;
                    if (ih < 0 || ih >= d.in_h) continue;
                    const float* src = row + oh * d.out_w;
                    float* dst_row = xc + ih * d.in_w;
                    for (int64_t ow = 0; ow < d.out_w; ++ow) {
                        const int64_t iw = ow * d.stride - d.padding + kj;
                        if (iw >= 0 && iw < d.in_w) dst_row[iw] += src[ow];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
    const ConvDims d = conv_dims(input, weight, bias, stride, padding);
    const bool track = should_record({&input, &weight, &bias});
    Tensor out = make_output({d.batch, d.out_c, d.out_h, d.out_w}, track);

    const int64_t K = d.col_rows();
    const int64_t P = d.col_cols();
    const float* xp = input.data().data();
    const float* wp = weight.data().data();
    const float* bp = bias.data().data();
    float* op = out.data().data();

    // A whole chunk of samples shares one GEMM; the wide N dimension is what
    // makes the small per-layer matrices run at a decent rate.
    parallel_chunks(d.batch, kConvChunk, [&](int64_t, int64_t b, int64_t e) {
        const int64_t cnt = e - b;
        const int64_t NP = cnt * P;
        tl_col.resize(static_cast<size_t>(K * NP + d.out_c * NP));
        float* col = tl_col.data();
        float* prod = col + K * NP;
        for (int64_t n = b; n < e; ++n) {
            im2col_strided(xp + n * d.in_c * d.in_h * d.in_w, d, col + (n - b) * P, NP);
        }
        CMapMat w(wp, d.out_c, K);
        CMapMat colm(col, K, NP);
        MapMat o(prod, d.out_c, NP);
        o.noalias() = w * colm;
        for (int64_t n = b; n < e; ++n) {
            for (int64_t oc = 0; oc < d.out_c; ++oc) {
                const float* src = prod + oc * NP + (n - b) * P;
                float* dst = op + (n * d.out_c + oc) * P;
                for (int64_t p = 0; p < P; ++p) dst[p] = src[p] + bp[oc];
            }
        }
    });

    if (track) {
        finish_record(OpKind::Conv2d, {&input, &weight, &bias}, out,
                      [input, weight, bias, out, d](Tape& tape) {
            const FloatVec& dout = *tape.grad_of(out);
            float* dx = tape.grad_sink(input);
            float* dw = tape.grad_sink(weight);
            float* db = tape.grad_sink(bias);
            const int64_t K = d.col_rows();
            const int64_t P = d.col_cols();
            const float* xp = input.data().data();
            const float* wp = weight.data().data();

            const int64_t n_chunks = (d.batch + kConvChunk - 1) / kConvChunk;
            std::vector<std::vector<float>> dw_part, db_part;
            if (dw) dw_part.assign(static_cast<size_t>(n_chunks),
                                   std::vector<float>(static_cast<size_t>(d.out_c * K), 0.0f));
            if (db) db_part.assign(static_cast<size_t>(n_chunks),
                                   std::vector<float>(static_cast<size_t>(d.out_c), 0.0f));

            const int64_t in_span = d.in_c * d.in_h * d.in_w;
            parallel_chunks(d.batch, kConvChunk, [&](int64_t ci, int64_t b, int64_t e) {
                // Per-worker scratch: the chunk's patch matrix, the output
                // gradient gathered into chunk-interleaved layout, the dcol
                // product, and a local dx plane. Each leaf sink receives
                // exactly one add per element per backward pass (repeated
                // passes stay bit-exact multiples of a single pass).
                const int64_t cnt = e - b;
                const int64_t NP = cnt * P;
                tl_col.resize(static_cast<size_t>((K + d.out_c + K) * NP + in_span));
                float* col = tl_col.data();
                float* gom = col + K * NP;
                float* dcol = gom + d.out_c * NP;
                float* dxn = dcol + K * NP;

                for (int64_t n = b; n < e; ++n) {
                    for (int64_t oc = 0; oc < d.out_c; ++oc) {
                        std::memcpy(gom + oc * NP + (n - b) * P,
                                    dout.data() + (n * d.out_c + oc) * P,
                                    static_cast<size_t>(P) * sizeof(float));
                    }
                }
                CMapMat w(wp, d.out_c, K);
                CMapMat go(gom, d.out_c, NP);
                if (dw) {
                    for (int64_t n = b; n < e; ++n) {
                        im2col_strided(xp + n * in_span, d, col + (n - b) * P, NP);
                    }
                    MapMat dwm(dw_part[static_cast<size_t>(ci)].data(), d.out_c, K);
                    CMapMat colm(col, K, NP);
                    dwm.noalias() += go * colm.transpose();
                }
                if (db) {
                    float* dbp = db_part[static_cast<size_t>(ci)].data();
                    for (int64_t oc = 0; oc < d.out_c; ++oc) {
                        dbp[oc] += go.row(oc).sum();
                    }
                }
                if (dx) {
                    MapMat dcolm(dcol, K, NP);
                    dcolm.noalias() = w.transpose() * go;
                    for (int64_t n = b; n < e; ++n) {
                        std::fill(dxn, dxn + in_span, 0.0f);
                        col2im_add_strided(dcol + (n - b) * P, d, NP, dxn);
                        float* sink = dx + n * in_span;
                        for (int64_t i = 0; i < in_span; ++i) sink[i] += dxn[i];
                    }
                }
            });

            // Partial reduction in chunk order (worker-count independent),
            // then a single add into the sink.
            if (dw) {
                for (int64_t c = 1; c < n_chunks; ++c) {
                    for (size_t i = 0; i < dw_part[0].size(); ++i) {
                        dw_part[0][i] += dw_part[static_cast<size_t>(c)][i];
                    }
                }
                for (size_t i = 0; i < dw_part[0].size(); ++i) dw[i] += dw_part[0][i];
            }
            if (db) {
                for (int64_t c = 1; c < n_chunks; ++c) {
                    for (size_t i = 0; i < db_part[0].size(); ++i) {
                        db_part[0][i] += db_part[static_cast<size_t>(c)][i];
                    }
                }
                for (size_t i = 0; i < db_part[0].size(); ++i) db[i] += db_part[0][i];
            }
        });
    }
    return out;
}

// ---- linear ----------------------------------------------------------------

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    check_rank(input, 2, "linear", "input");
    check_rank(weight, 2, "linear", "weight");
    check_rank(bias, 1, "linear", "bias");
    const int64_t N = input.size(0), I = input.size(1);
    const int64_t O = weight.size(0);
    if (weight.size(1) != I) {
        std::ostringstream os;
        os << "linear: input feature axis (" << I << ") != weight in-feature axis ("
           << weight.size(1) << ")";
        throw DimensionError(os.str());
    }
    if (bias.size(0) != O) {
        std::ostringstream os;
        os << "linear: bias axis (" << bias.size(0) << ") != weight out-feature axis (" << O
           << ")";
        throw DimensionError(os.str());
    }
    const bool track = should_record({&input, &weight, &bias});
    Tensor out = make_output({N, O}, track);

    CMapMat x(input.data().data(), N, I);
    CMapMat w(weight.data().data(), O, I);
    MapMat o(out.data().data(), N, O);
    o.noalias() = x * w.transpose();
    const float* bp = bias.data().data();
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t j = 0; j < O; ++j) o(n, j) += bp[j];
    }

    if (track) {
        finish_record(OpKind::Linear, {&input, &weight, &bias}, out,
                      [input, weight, out, N, I, O, bias](Tape& tape) {
            const FloatVec& dout = *tape.grad_of(out);
            CMapMat go(dout.data(), N, O);
            // Products land in temporaries so each sink element gets exactly
            // one add per pass.
            if (float* dx = tape.grad_sink(input)) {
                CMapMat w(weight.data().data(), O, I);
                RowMat t = go * w;
                for (int64_t i = 0; i < N * I; ++i) dx[i] += t.data()[i];
            }
            if (float* dw = tape.grad_sink(weight)) {
                CMapMat x(input.data().data(), N, I);
                RowMat t = go.transpose() * x;
                for (int64_t i = 0; i < O * I; ++i) dw[i] += t.data()[i];
            }
            if (float* db = tape.grad_sink(bias)) {
                for (int64_t j = 0; j < O; ++j) {
                    db[j] += go.col(j).sum();
                }
            }
        });
    }
    return out;
}

// ---- elementwise -----------------------------------------------------------

namespace {
// Fixed chunking for disjoint-write elementwise loops.
constexpr int64_t kEwChunk = 1 << 16;
}  // namespace

Tensor relu(const Tensor& x) {
    const bool track = should_record({&x});
    Tensor out = make_output(x.shape(), track);
    const float* xs = x.data().data();
    float* os = out.data().data();
    parallel_chunks(x.numel(), kEwChunk, [&](int64_t, int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) os[i] = xs[i] > 0.0f ? xs[i] : 0.0f;
    });

    if (track) {
        finish_record(OpKind::Relu, {&x}, out, [x, out](Tape& tape) {
            const FloatVec& dout = *tape.grad_of(out);
            if (float* dx = tape.grad_sink(x)) {
                const float* xs = x.data().data();
                const float* gs = dout.data();
                // Subgradient 0 at the kink.
                parallel_chunks(x.numel(), kEwChunk, [&](int64_t, int64_t b, int64_t e) {
                    for (int64_t i = b; i < e; ++i) {
                        if (xs[i] > 0.0f) dx[i] += gs[i];
                    }
                });
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    const bool track = should_record({&a, &b});
    Tensor out = make_output(a.shape(), track);
    const float* as = a.data().data();
    const float* bs = b.data().data();
    float* os = out.data().data();
    parallel_chunks(a.numel(), kEwChunk, [&](int64_t, int64_t cb, int64_t ce) {
        for (int64_t i = cb; i < ce; ++i) os[i] = as[i] + bs[i];
    });

    if (track) {
        finish_record(OpKind::Add, {&a, &b}, out, [a, b, out](Tape& tape) {
            const FloatVec& dout = *tape.grad_of(out);
            const float* gs = dout.data();
            const auto n = static_cast<int64_t>(dout.size());
            if (float* da = tape.grad_sink(a)) {
                parallel_chunks(n, kEwChunk, [&](int64_t, int64_t cb, int64_t ce) {
                    for (int64_t i = cb; i < ce; ++i) da[i] += gs[i];
                });
            }
            if (float* db = tape.grad_sink(b)) {
                parallel_chunks(n, kEwChunk, [&](int64_t, int64_t cb, int64_t ce) {
                    for (int64_t i = cb; i < ce; ++i) db[i] += gs[i];
                });
            }
        });
    }
    return out;
}

// ---- batchnorm ---------------------------------------------------------

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, bool training, float momentum, float eps) {
    check_rank(x, 4, "batchnorm2d", "input");
    check_rank(gamma, 1, "batchnorm2d", "gamma");
    check_rank(beta, 1, "batchnorm2d", "beta");
    const int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    if (gamma.size(0) != C || beta.size(0) != C) {
        std::ostringstream os;
        os << "batchnorm2d: channel axis (" << C << ") != gamma/beta axes ("
           << gamma.size(0) << "," << beta.size(0) << ")";
        throw DimensionError(os.str());
    }
    const int64_t m = N * H * W;
    if (training && m < 2) {
        throw ValidationError("batchnorm2d: degenerate batch, need N*H*W >= 2 in train mode");
    }

    const bool track = should_record({&x, &gamma, &beta});
    Tensor out = make_output(x.shape(), track);

    std::vector<float> mean(static_cast<size_t>(C)), invstd(static_cast<size_t>(C));
    const float* xp = x.data().data();
    float* rm = state.running_mean.data().data();
    float* rv = state.running_var.data().data();
    const int64_t plane = H * W;
    const int64_t sample = C * plane;

    if (training) {
        // Fixed channel-major reduction order; double accumulators.
        parallel_chunks(C, 4, [&](int64_t, int64_t cb, int64_t ce) {
            for (int64_t c = cb; c < ce; ++c) {
                double sum = 0.0, sumsq = 0.0;
                for (int64_t n = 0; n < N; ++n) {
                    const float* p = xp + n * sample + c * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        const double v = p[i];
                        sum += v;
                        sumsq += v * v;
                    }
                }
                const double mu = sum / static_cast<double>(m);
                double var = sumsq / static_cast<double>(m) - mu * mu;
                if (var < 0.0) var = 0.0;
                mean[static_cast<size_t>(c)] = static_cast<float>(mu);
                invstd[static_cast<size_t>(c)] =
                    static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(eps)));
                const double unbiased = m > 1 ? var * static_cast<double>(m) / (m - 1) : var;
                rm[c] = (1.0f - momentum) * rm[c] + momentum * static_cast<float>(mu);
                rv[c] = (1.0f - momentum) * rv[c] + momentum * static_cast<float>(unbiased);
            }
        });
    } else {
        for (int64_t c = 0; c < C; ++c) {
            mean[static_cast<size_t>(c)] = rm[c];
            invstd[static_cast<size_t>(c)] =
                static_cast<float>(1.0 / std::sqrt(static_cast<double>(rv[c]) +
                                                   static_cast<double>(eps)));
        }
    }

    const float* gp = gamma.data().data();
    const float* bp = beta.data().data();
    float* op = out.data().data();
    parallel_chunks(C, 4, [&](int64_t, int64_t cb, int64_t ce) {
        for (int64_t c = cb; c < ce; ++c) {
            const float mu = mean[static_cast<size_t>(c)];
            const float is = invstd[static_cast<size_t>(c)];
            const float g = gp[c], b = bp[c];
            for (int64_t n = 0; n < N; ++n) {
                const float* src = xp + n * sample + c * plane;
                float* dst = op + n * sample + c * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    dst[i] = g * (src[i] - mu) * is + b;
                }
            }
        }
    });

    if (track) {
        finish_record(OpKind::BatchNorm, {&x, &gamma, &beta}, out,
                      [x, gamma, out, mean, invstd, training, N, C, plane, sample,
                       m, beta](Tape& tape) {
            const FloatVec& dout = *tape.grad_of(out);
            float* dx = tape.grad_sink(x);
            float* dg = tape.grad_sink(gamma);
            float* db = tape.grad_sink(beta);
            const float* xp = x.data().data();
            const float* gp = gamma.data().data();

            parallel_chunks(C, 4, [&](int64_t, int64_t cb, int64_t ce) {
                for (int64_t c = cb; c < ce; ++c) {
                    const float mu = mean[static_cast<size_t>(c)];
                    const float is = invstd[static_cast<size_t>(c)];
                    double s1 = 0.0, s2 = 0.0;
                    for (int64_t n = 0; n < N; ++n) {
                        const float* xrow = xp + n * sample + c * plane;
                        const float* grow = dout.data() + n * sample + c * plane;
                        for (int64_t i = 0; i < plane; ++i) {
                            s1 += grow[i];
                            s2 += static_cast<double>(grow[i]) * ((xrow[i] - mu) * is);
                        }
                    }
                    if (dg) dg[c] += static_cast<float>(s2);
                    if (db) db[c] += static_cast<float>(s1);
                    if (dx) {
                        const float g = gp[c];
                        if (training) {
                            const float k1 = static_cast<float>(s1 / static_cast<double>(m));
                            const float k2 = static_cast<float>(s2 / static_cast<double>(m));
                            for (int64_t n = 0; n < N; ++n) {
                                const float* xrow = xp + n * sample + c * plane;
                                const float* grow = dout.data() + n * sample + c * plane;
                                float* drow = dx + n * sample + c * plane;
                                for (int64_t i = 0; i < plane; ++i) {
                                    const float xhat = (xrow[i] - mu) * is;
                                    drow[i] += g * is * (grow[i] - k1 - xhat * k2);
                                }
                            }
                        } else {
                            // Running stats are constants in eval mode.
                            for (int64_t n = 0; n < N; ++n) {
                                const float* grow = dout.data() + n * sample + c * plane;
                                float* drow = dx + n * sample + c * plane;
                                for (int64_t i = 0; i < plane; ++i) {
                                    drow[i] += g * is * grow[i];
                                }
                            }
                        }
                    }
                }
            });
        });
    }
    return out;
}

// ---- pooling ---------------------------------------------------------------

Tensor avg_pool2x2(const Tensor& x) {
    check_rank(x, 4, "avg_pool2x2", "input");
    const int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    if (H % 2 != 0 || W % 2 != 0) {
        throw DimensionError("avg_pool2x2: spatial dims must be even, got " +
                             shape_str(x.shape()));
    }
    const int64_t OH = H / 2, OW = W / 2;
    const bool track = should_record({&x});
    Tensor out = make_output({N, C, OH, OW}, track);
    const float* xp = x.data().data();
    float* op = out.data().data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const float* src = xp + nc * H * W;
        float* dst = op + nc * OH * OW;
        for (int64_t oh = 0; oh < OH; ++oh) {
            for (int64_t ow = 0; ow < OW; ++ow) {
                const float* p = src + (2 * oh) * W + 2 * ow;
                dst[oh * OW + ow] = 0.25f * (p[0] + p[1] + p[W] + p[W + 1]);
            }
        }
    }

    if (track) {
        finish_record(OpKind::AvgPool2x2, {&x}, out, [x, out, N, C, H, W, OH, OW](Tape& tape) {
            const FloatVec& dout = *tape.grad_of(out);
            if (float* dx = tape.grad_sink(x)) {
                for (int64_t nc = 0; nc < N * C; ++nc) {
                    const float* src = dout.data() + nc * OH * OW;
                    float* dst = dx + nc * H * W;
                    for (int64_t oh = 0; oh < OH; ++oh) {
                        for (int64_t ow = 0; ow < OW; ++ow) {
                            const float g = 0.25f * src[oh * OW + ow];
                            float* p = dst + (2 * oh) * W + 2 * ow;
                            p[0] += g;
                            p[1] += g;
                            p[W] += g;
                            p[W + 1] += g;
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    check_rank(x, 4, "global_avg_pool", "input");
    const int64_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    const int64_t plane = H * W;
    const bool track = should_record({&x});
    Tensor out = make_output({N, C}, track);
    const float* xp = x.data().data();
    float* op = out.data().data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        double s = 0.0;
        const float* p = xp + nc * plane;
        for (int64_t i = 0; i < plane; ++i) s += p[i];
        op[nc] = static_cast<float>(s / static_cast<double>(plane));
    }

    if (track) {
        finish_record(OpKind::GlobalAvgPool, {&x}, out, [x, out, N, C, plane](Tape& tape) {
            const FloatVec& dout = *tape.grad_of(out);
            if (float* dx = tape.grad_sink(x)) {
                const float inv = 1.0f / static_cast<float>(plane);
                for (int64_t nc = 0; nc < N * C; ++nc) {
                    const float g = dout[static_cast<size_t>(nc)] * inv;
                    float* p = dx + nc * plane;
                    for (int64_t i = 0; i < plane; ++i) p[i] += g;
                }
            }
        });
    }
    return out;
}

// ---- concat ------------------------------------------------------------

Tensor concat(const Tensor& a, const Tensor& b) {
    check_rank(a, 2, "concat", "a");
    check_rank(b, 2, "concat", "b");
    const int64_t N = a.size(0), A = a.size(1), B = b.size(1);
    if (b.size(0) != N) {
        std::ostringstream os;
        os << "concat: leading axes differ, " << N << " vs " << b.size(0);
        throw DimensionError(os.str());
    }
    const bool track = should_record({&a, &b});
    Tensor out = make_output({N, A + B}, track);
    const float* ap = a.data().data();
    const float* bp = b.data().data();
    float* op = out.data().data();
    for (int64_t n = 0; n < N; ++n) {
        std::memcpy(op + n * (A + B), ap + n * A, static_cast<size_t>(A) * sizeof(float));
        std::memcpy(op + n * (A + B) + A, bp + n * B, static_cast<size_t>(B) * sizeof(float));
    }

    if (track) {
        finish_record(OpKind::Concat, {&a, &b}, out, [a, b, out, N, A, B](Tape& tape) {
            const FloatVec& dout = *tape.grad_of(out);
            if (float* da = tape.grad_sink(a)) {
                for (int64_t n = 0; n < N; ++n) {
                    const float* src = dout.data() + n * (A + B);
                    for (int64_t i = 0; i < A; ++i) da[n * A + i] += src[i];
                }
            }
            if (float* db = tape.grad_sink(b)) {
                for (int64_t n = 0; n < N; ++n) {
                    const float* src = dout.data() + n * (A + B) + A;
                    for (int64_t i = 0; i < B; ++i) db[n * B + i] += src[i];
                }
            }
        });
    }
    return out;
}

// ---- softmax cross entropy ---------------------------------------------

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    check_rank(logits, 2, "softmax_cross_entropy", "logits");
    const int64_t N = logits.size(0), K = logits.size(1);
    if (static_cast<int64_t>(labels.size()) != N) {
        std::ostringstream os;
        os << "softmax_cross_entropy: batch axis (" << N << ") != label count ("
           << labels.size() << ")";
        throw DimensionError(os.str());
    }
    for (int64_t n = 0; n < N; ++n) {
        if (labels[static_cast<size_t>(n)] < 0 || labels[static_cast<size_t>(n)] >= K) {
            std::ostringstream os;
            os << "softmax_cross_entropy: label " << labels[static_cast<size_t>(n)]
               << " at row " << n << " outside [0," << K << ")";
            throw DataError(os.str());
        }
    }

    const bool track = should_record({&logits});
    Tensor out = make_output({1}, track);

    // Max-subtracted softmax; probabilities saved for the backward rule.
    std::vector<float> probs(static_cast<size_t>(N * K));
    const float* lp = logits.data().data();
    double total = 0.0;
    for (int64_t n = 0; n < N; ++n) {
        const float* row = lp + n * K;
        float mx = row[0];
        for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double sum = 0.0;
        for (int64_t k = 0; k < K; ++k) {
            const double e = std::exp(static_cast<double>(row[k] - mx));
            probs[static_cast<size_t>(n * K + k)] = static_cast<float>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int64_t k = 0; k < K; ++k) {
            probs[static_cast<size_t>(n * K + k)] = static_cast<float>(
                probs[static_cast<size_t>(n * K + k)] * inv);
        }
        const double lse = static_cast<double>(mx) + std::log(sum);
        total += lse - static_cast<double>(row[labels[static_cast<size_t>(n)]]);
    }
    out.data()[0] = static_cast<float>(total / static_cast<double>(N));

    if (track) {
        std::vector<int> saved_labels(labels.begin(), labels.end());
        finish_record(OpKind::SoftmaxCrossEntropy, {&logits}, out,
                      [logits, out, probs = std::move(probs),
                       saved_labels = std::move(saved_labels), N, K](Tape& tape) {
            const FloatVec& dout = *tape.grad_of(out);
            if (float* dl = tape.grad_sink(logits)) {
                const float g = dout[0] / static_cast<float>(N);
                for (int64_t n = 0; n < N; ++n) {
                    for (int64_t k = 0; k < K; ++k) {
                        float v = probs[static_cast<size_t>(n * K + k)];
                        if (k == saved_labels[static_cast<size_t>(n)]) v -= 1.0f;
                        dl[n * K + k] += g * v;
                    }
                }
            }
        });
    }
    return out;
}

Tensor select(const Tensor& x, int64_t flat_index) {
    if (flat_index < 0 || flat_index >= x.numel()) {
        throw DimensionError("select: flat index out of range");
    }
    const bool track = should_record({&x});
    Tensor out = make_output({1}, track);
    out.data()[0] = x.data()[static_cast<size_t>(flat_index)];
    if (track) {
        finish_record(OpKind::Select, {&x}, out, [x, out, flat_index](Tape& tape) {
            const FloatVec& dout = *tape.grad_of(out);
            if (float* dx = tape.grad_sink(x)) {
                dx[flat_index] += dout[0];
            }
        });
    }
    return out;
}

std::vector<float> softmax_rows(const Tensor& logits) {
    check_rank(logits, 2, "softmax_rows", "logits");
    const int64_t N = logits.size(0), K = logits.size(1);
    std::vector<float> probs(static_cast<size_t>(N * K));
    const float* lp = logits.data().data();
    for (int64_t n = 0; n < N; ++n) {
        const float* row = lp + n * K;
        float mx = row[0];
        for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double sum = 0.0;
        for (int64_t k = 0; k < K; ++k) {
            const double e = std::exp(static_cast<double>(row[k] - mx));
            probs[static_cast<size_t>(n * K + k)] = static_cast<float>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int64_t k = 0; k < K; ++k) {
            probs[static_cast<size_t>(n * K + k)] =
                static_cast<float>(probs[static_cast<size_t>(n * K + k)] * inv);
        }
    }
    return probs;
}

bool all_finite(const Tensor& t) {
    for (float v : t.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace selfsense
