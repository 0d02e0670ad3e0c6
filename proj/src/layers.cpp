#include "sphcnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <cblas.h>

namespace sphcnn {

namespace {

struct BlasSetup {
    BlasSetup() { openblas_set_num_threads(1); }  // bitwise-reproducible runs
};
const BlasSetup blas_setup;

// C (m x n) = A (m x k) * B (k x n) [+ C], all row-major contiguous.
void gemm(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate,
          bool trans_a = false, bool trans_b = false) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a, trans_a ? m : k, b,
                trans_b ? k : n, accumulate ? 1.0 : 0.0, c, n);
}

double uniform_init(std::mt19937_64& rng, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    return dist(rng);
}

}  // namespace

bool KernelMask::enabled(int k) const {
    switch (k) {
        case 0: return identity;
        case 1: return grad_x;
        case 2: return grad_y;
        case 3: return laplacian;
    }
    return false;
}

int KernelMask::count() const {
    return int(identity) + int(grad_x) + int(grad_y) + int(laplacian);
}

std::string KernelMask::to_string() const {
    std::string s;
    if (identity) s += 'I';
    if (grad_x) s += 'X';
    if (grad_y) s += 'Y';
    if (laplacian) s += 'L';
    return s;
}

KernelMask KernelMask::parse(const std::string& s) {
    KernelMask m{false, false, false, false};
    for (char c : s) {
        switch (std::toupper(static_cast<unsigned char>(c))) {
            case 'I': m.identity = true; break;
            case 'X': m.grad_x = true; break;
            case 'Y': m.grad_y = true; break;
            case 'L': m.laplacian = true; break;
            default: throw std::invalid_argument("bad kernel mask character: " + s);
        }
    }
    if (m.count() == 0) throw std::invalid_argument("kernel mask selects no operators");
    return m;
}

std::vector<ParamView> parameters(Layer& layer) {
    std::vector<ParamView> out;
    layer.collect_params(out);
    return out;
}

std::vector<ParamView> buffers(Layer& layer) {
    std::vector<ParamView> out;
    layer.collect_buffers(out);
    return out;
}

std::size_t parameter_count(Layer& layer) {
    std::size_t n = 0;
    for (const auto& p : parameters(layer)) n += p.size;
    return n;
}

void zero_gradients(Layer& layer) {
    for (auto& p : parameters(layer))
        if (p.grad) std::fill(p.grad, p.grad + p.size, 0.0);
}

// ---------------------------------------------------------------- MeshConv

MeshConv::MeshConv(int in_channels, int out_channels, std::shared_ptr<const OperatorSet> ops,
                   KernelMask mask, std::mt19937_64& init_rng)
    : in_channels_(in_channels), out_channels_(out_channels), ops_(std::move(ops)), mask_(mask) {
    if (in_channels < 1 || out_channels < 1)
        throw std::invalid_argument("MeshConv: channel counts must be positive");
    for (int k = 0; k < 4; ++k)
        if (mask_.enabled(k)) active_ops_.push_back(k);

    theta_.resize(static_cast<std::size_t>(out_channels_) * in_channels_ * active_ops_.size());
    double bound = std::sqrt(6.0 / (in_channels_ * 4.0));
    for (auto& w : theta_) w = uniform_init(init_rng, bound);
    bias_.assign(out_channels_, 0.0);
    theta_grad_.assign(theta_.size(), 0.0);
    bias_grad_.assign(bias_.size(), 0.0);
}

MeshTensor MeshConv::forward(const MeshTensor& x, bool) {
    const int v = ops_->identity.rows();
    x.require_shape(in_channels_, v, ops_->level, "MeshConv");
    const int nk = static_cast<int>(active_ops_.size());
    const int b_count = x.batch;
    cached_batch_ = b_count;

    basis_.resize(static_cast<std::size_t>(b_count) * in_channels_ * nk * v);
    for (int b = 0; b < b_count; ++b) {
        const double* xb = x.sample(b);
        double* bb = basis_.data() + static_cast<std::size_t>(b) * in_channels_ * nk * v;
        for (int i = 0; i < in_channels_; ++i) {
            for (int kk = 0; kk < nk; ++kk) {
                ops_->forward_op(active_ops_[kk])
                    .multiply(xb + static_cast<std::size_t>(i) * v,
                              bb + (static_cast<std::size_t>(i) * nk + kk) * v);
            }
        }
    }

    // theta is the (out, in*nk) mixing matrix over the active-operator basis
    MeshTensor y(b_count, out_channels_, v, ops_->level);
    for (int b = 0; b < b_count; ++b) {
        double* yb = y.sample(b);
        gemm(out_channels_, v, in_channels_ * nk, theta_.data(),
             basis_.data() + static_cast<std::size_t>(b) * in_channels_ * nk * v, yb, false);
        for (int o = 0; o < out_channels_; ++o) {
            double bo = bias_[o];
            for (int j = 0; j < v; ++j) yb[static_cast<std::size_t>(o) * v + j] += bo;
        }
    }
    return y;
}

MeshTensor MeshConv::backward(const MeshTensor& grad_out) {
    const int v = ops_->identity.rows();
    grad_out.require_shape(out_channels_, v, ops_->level, "MeshConv backward");
    if (grad_out.batch != cached_batch_)
        throw std::invalid_argument("MeshConv backward: batch mismatch with cached forward");
    const int nk = static_cast<int>(active_ops_.size());
    const int b_count = grad_out.batch;

    for (int b = 0; b < b_count; ++b) {
        const double* gb = grad_out.sample(b);
        const double* bb = basis_.data() + static_cast<std::size_t>(b) * in_channels_ * nk * v;
        gemm(out_channels_, in_channels_ * nk, v, gb, bb, theta_grad_.data(), true, false, true);
        for (int o = 0; o < out_channels_; ++o) {
            double acc = 0.0;
            for (int j = 0; j < v; ++j) acc += gb[static_cast<std::size_t>(o) * v + j];
            bias_grad_[o] += acc;
        }
    }

    MeshTensor dx(b_count, in_channels_, v, ops_->level);
    std::vector<double> dbasis(static_cast<std::size_t>(in_channels_) * nk * v);
    for (int b = 0; b < b_count; ++b) {
        gemm(in_channels_ * nk, v, out_channels_, theta_.data(), grad_out.sample(b),
             dbasis.data(), false, true, false);
        double* dxb = dx.sample(b);
        for (int i = 0; i < in_channels_; ++i) {
            for (int kk = 0; kk < nk; ++kk) {
                const SparseMatrix& t = ops_->transpose_op(active_ops_[kk]);
                const double* src = dbasis.data() + (static_cast<std::size_t>(i) * nk + kk) * v;
                double* dst = dxb + static_cast<std::size_t>(i) * v;
                for (int r = 0; r < v; ++r) {
                    double acc = 0.0;
                    for (int p = t.offsets()[r]; p < t.offsets()[r + 1]; ++p)
                        acc += t.values()[p] * src[t.indices()[p]];
                    dst[r] += acc;
                }
            }
        }
    }
    return dx;
}

void MeshConv::collect_params(std::vector<ParamView>& out) {
    out.push_back({"meshconv.theta", theta_.data(), theta_grad_.data(), theta_.size()});
    out.push_back({"meshconv.bias", bias_.data(), bias_grad_.data(), bias_.size()});
}

// ------------------------------------------------------- MeshConvTranspose

MeshConvTranspose::MeshConvTranspose(int in_channels, int out_channels,
                                     std::shared_ptr<const OperatorSet> fine_ops, KernelMask mask,
                                     std::mt19937_64& init_rng)
    : conv_(in_channels, out_channels, fine_ops, mask, init_rng), fine_level_(fine_ops->level) {
    if (fine_level_ < 1) throw std::invalid_argument("MeshConvTranspose: fine level must be >= 1");
}

MeshTensor MeshConvTranspose::forward(const MeshTensor& x, bool training) {
    if (x.level != fine_level_ - 1)
        throw std::invalid_argument("MeshConvTranspose: operator level mismatch");
    coarse_verts_ = x.verts;
    const int fine_verts = static_cast<int>(level_stats(fine_level_).n_v);
    MeshTensor padded(x.batch, x.channels, fine_verts, fine_level_);
    for (int b = 0; b < x.batch; ++b)
        for (int c = 0; c < x.channels; ++c)
            std::memcpy(&padded.at(b, c, 0), &x.at(b, c, 0), sizeof(double) * coarse_verts_);
    return conv_.forward(padded, training);
}

MeshTensor MeshConvTranspose::backward(const MeshTensor& grad_out) {
    MeshTensor dpadded = conv_.backward(grad_out);
    MeshTensor dx(dpadded.batch, dpadded.channels, coarse_verts_, fine_level_ - 1);
    for (int b = 0; b < dx.batch; ++b)
        for (int c = 0; c < dx.channels; ++c)
            std::memcpy(&dx.at(b, c, 0), &dpadded.at(b, c, 0), sizeof(double) * coarse_verts_);
    return dx;
}

void MeshConvTranspose::collect_params(std::vector<ParamView>& out) {
    conv_.collect_params(out);
}

// ---------------------------------------------------------------- DownSamp

MeshTensor DownSamp::forward(const MeshTensor& x, bool) {
    if (x.level < 1) throw std::invalid_argument("DownSamp: level-0 input cannot be downsampled");
    fine_verts_ = x.verts;
    fine_level_ = x.level;
    const int coarse_verts = static_cast<int>(level_stats(x.level - 1).n_v);
    MeshTensor y(x.batch, x.channels, coarse_verts, x.level - 1);
    for (int b = 0; b < x.batch; ++b)
        for (int c = 0; c < x.channels; ++c)
            std::memcpy(&y.at(b, c, 0), &x.at(b, c, 0), sizeof(double) * coarse_verts);
    return y;
}

MeshTensor DownSamp::backward(const MeshTensor& grad_out) {
    MeshTensor dx(grad_out.batch, grad_out.channels, fine_verts_, fine_level_);
    for (int b = 0; b < grad_out.batch; ++b)
        for (int c = 0; c < grad_out.channels; ++c)
            std::memcpy(&dx.at(b, c, 0), &grad_out.at(b, c, 0),
                        sizeof(double) * grad_out.verts);
    return dx;
}

// ----------------------------------------------------------------- Conv1x1

Conv1x1::Conv1x1(int in_channels, int out_channels, std::mt19937_64& init_rng)
    : in_channels_(in_channels), out_channels_(out_channels) {
    if (in_channels < 1 || out_channels < 1)
        throw std::invalid_argument("Conv1x1: channel counts must be positive");
    weight_.resize(static_cast<std::size_t>(out_channels_) * in_channels_);
    double bound = std::sqrt(6.0 / in_channels_);
    for (auto& w : weight_) w = uniform_init(init_rng, bound);
    bias_.assign(out_channels_, 0.0);
    weight_grad_.assign(weight_.size(), 0.0);
    bias_grad_.assign(bias_.size(), 0.0);
}

MeshTensor Conv1x1::forward(const MeshTensor& x, bool) {
    if (x.channels != in_channels_) throw std::invalid_argument("Conv1x1: channel mismatch");
    cached_input_ = x;
    const int v = x.verts;
    MeshTensor y(x.batch, out_channels_, v, x.level);
    for (int b = 0; b < x.batch; ++b) {
        double* yb = y.sample(b);
        gemm(out_channels_, v, in_channels_, weight_.data(), x.sample(b), yb, false);
        for (int o = 0; o < out_channels_; ++o)
            for (int j = 0; j < v; ++j) yb[static_cast<std::size_t>(o) * v + j] += bias_[o];
    }
    return y;
}

MeshTensor Conv1x1::backward(const MeshTensor& grad_out) {
    const MeshTensor& x = cached_input_;
    grad_out.require_shape(out_channels_, x.verts, x.level, "Conv1x1 backward");
    const int v = x.verts;
    MeshTensor dx(x.batch, in_channels_, v, x.level);
    for (int b = 0; b < x.batch; ++b) {
        const double* gb = grad_out.sample(b);
        gemm(out_channels_, in_channels_, v, gb, x.sample(b), weight_grad_.data(), true, false,
             true);
        for (int o = 0; o < out_channels_; ++o) {
            double acc = 0.0;
            for (int j = 0; j < v; ++j) acc += gb[static_cast<std::size_t>(o) * v + j];
            bias_grad_[o] += acc;
        }
        gemm(in_channels_, v, out_channels_, weight_.data(), gb, dx.sample(b), false, true, false);
    }
    return dx;
}

void Conv1x1::collect_params(std::vector<ParamView>& out) {
    out.push_back({name() + ".weight", weight_.data(), weight_grad_.data(), weight_.size()});
    out.push_back({name() + ".bias", bias_.data(), bias_grad_.data(), bias_.size()});
}

// --------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(int channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
    gamma_.assign(channels_, 1.0);
    beta_.assign(channels_, 0.0);
    gamma_grad_.assign(channels_, 0.0);
    beta_grad_.assign(channels_, 0.0);
    running_mean_.assign(channels_, 0.0);
    running_var_.assign(channels_, 1.0);
}

MeshTensor BatchNorm::forward(const MeshTensor& x, bool training) {
    if (x.channels != channels_) throw std::invalid_argument("BatchNorm: channel mismatch");
    const int v = x.verts;
    const std::int64_t n = static_cast<std::int64_t>(x.batch) * v;
    cached_training_ = training;
    cached_batch_ = x.batch;
    cached_verts_ = v;
    cached_level_ = x.level;
    xhat_.resize(x.size());
    inv_std_.resize(channels_);

    MeshTensor y(x.batch, channels_, v, x.level);
    if (training) {
        if (n < 2) throw std::invalid_argument("BatchNorm: need batch*verts >= 2 in training");
        for (int c = 0; c < channels_; ++c) {
            double mean = 0.0;
            for (int b = 0; b < x.batch; ++b)
                for (int j = 0; j < v; ++j) mean += x.at(b, c, j);
            mean /= n;
            double var = 0.0;
            for (int b = 0; b < x.batch; ++b)
                for (int j = 0; j < v; ++j) {
                    double d = x.at(b, c, j) - mean;
                    var += d * d;
                }
            var /= n;
            double istd = 1.0 / std::sqrt(var + eps_);
            inv_std_[c] = istd;
            for (int b = 0; b < x.batch; ++b)
                for (int j = 0; j < v; ++j) {
                    double h = (x.at(b, c, j) - mean) * istd;
                    xhat_[(static_cast<std::size_t>(b) * channels_ + c) * v + j] = h;
                    y.at(b, c, j) = gamma_[c] * h + beta_[c];
                }
            running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
            double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
            running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * unbiased;
        }
    } else {
        for (int c = 0; c < channels_; ++c) {
            double istd = 1.0 / std::sqrt(running_var_[c] + eps_);
            inv_std_[c] = istd;
            for (int b = 0; b < x.batch; ++b)
                for (int j = 0; j < v; ++j) {
                    double h = (x.at(b, c, j) - running_mean_[c]) * istd;
                    xhat_[(static_cast<std::size_t>(b) * channels_ + c) * v + j] = h;
                    y.at(b, c, j) = gamma_[c] * h + beta_[c];
                }
        }
    }
    return y;
}

MeshTensor BatchNorm::backward(const MeshTensor& grad_out) {
    grad_out.require_shape(channels_, cached_verts_, cached_level_, "BatchNorm backward");
    const int v = cached_verts_;
    const std::int64_t n = static_cast<std::int64_t>(cached_batch_) * v;
    MeshTensor dx(cached_batch_, channels_, v, cached_level_);
    for (int c = 0; c < channels_; ++c) {
        double sum_g = 0.0, sum_gh = 0.0;
        for (int b = 0; b < cached_batch_; ++b)
            for (int j = 0; j < v; ++j) {
                double g = grad_out.at(b, c, j);
                sum_g += g;
                sum_gh += g * xhat_[(static_cast<std::size_t>(b) * channels_ + c) * v + j];
            }
        gamma_grad_[c] += sum_gh;
        beta_grad_[c] += sum_g;
        if (cached_training_) {
            double scale = gamma_[c] * inv_std_[c] / static_cast<double>(n);
            for (int b = 0; b < cached_batch_; ++b)
                for (int j = 0; j < v; ++j) {
                    double g = grad_out.at(b, c, j);
                    double h = xhat_[(static_cast<std::size_t>(b) * channels_ + c) * v + j];
                    dx.at(b, c, j) = scale * (n * g - sum_g - h * sum_gh);
                }
        } else {
            double scale = gamma_[c] * inv_std_[c];
            for (int b = 0; b < cached_batch_; ++b)
                for (int j = 0; j < v; ++j) dx.at(b, c, j) = scale * grad_out.at(b, c, j);
        }
    }
    return dx;
}

void BatchNorm::collect_params(std::vector<ParamView>& out) {
    out.push_back({"batchnorm.gamma", gamma_.data(), gamma_grad_.data(), gamma_.size()});
    out.push_back({"batchnorm.beta", beta_.data(), beta_grad_.data(), beta_.size()});
}

void BatchNorm::collect_buffers(std::vector<ParamView>& out) {
    out.push_back({"batchnorm.running_mean", running_mean_.data(), nullptr, running_mean_.size()});
    out.push_back({"batchnorm.running_var", running_var_.data(), nullptr, running_var_.size()});
}

// -------------------------------------------------------------------- ReLU

MeshTensor ReLU::forward(const MeshTensor& x, bool) {
    shape_ = MeshTensor(x.batch, x.channels, x.verts, x.level);
    mask_.resize(x.size());
    MeshTensor y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mask_[i] = x.data[i] > 0.0;
        if (!mask_[i]) y.data[i] = 0.0;
    }
    return y;
}

MeshTensor ReLU::backward(const MeshTensor& grad_out) {
    MeshTensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!mask_[i]) dx.data[i] = 0.0;
    return dx;
}

// ----------------------------------------------------------------- Dropout

Dropout::Dropout(double rate, std::shared_ptr<std::mt19937_64> rng)
    : rate_(rate), rng_(std::move(rng)) {
    if (rate_ < 0.0 || rate_ >= 1.0) throw std::invalid_argument("Dropout: rate must be in [0,1)");
}

MeshTensor Dropout::forward(const MeshTensor& x, bool training) {
    active_ = training && rate_ > 0.0;
    if (!active_) return x;
    std::bernoulli_distribution keep(1.0 - rate_);
    mask_.resize(x.size());
    MeshTensor y = x;
    const double scale = 1.0 / (1.0 - rate_);
    for (std::size_t i = 0; i < x.size(); ++i) {
        mask_[i] = keep(*rng_);
        y.data[i] = mask_[i] ? x.data[i] * scale : 0.0;
    }
    return y;
}

MeshTensor Dropout::backward(const MeshTensor& grad_out) {
    if (!active_) return grad_out;
    MeshTensor dx = grad_out;
    const double scale = 1.0 / (1.0 - rate_);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] = mask_[i] ? dx.data[i] * scale : 0.0;
    return dx;
}

// ----------------------------------------------------------- GlobalAvgPool

MeshTensor GlobalAvgPool::forward(const MeshTensor& x, bool) {
    verts_ = x.verts;
    level_ = x.level;
    MeshTensor y(x.batch, x.channels, 1, -1);
    for (int b = 0; b < x.batch; ++b)
        for (int c = 0; c < x.channels; ++c) {
            double acc = 0.0;
            for (int j = 0; j < x.verts; ++j) acc += x.at(b, c, j);
            y.at(b, c, 0) = acc / x.verts;
        }
    return y;
}

MeshTensor GlobalAvgPool::backward(const MeshTensor& grad_out) {
    MeshTensor dx(grad_out.batch, grad_out.channels, verts_, level_);
    for (int b = 0; b < grad_out.batch; ++b)
        for (int c = 0; c < grad_out.channels; ++c) {
            double g = grad_out.at(b, c, 0) / verts_;
            for (int j = 0; j < verts_; ++j) dx.at(b, c, j) = g;
        }
    return dx;
}

// -------------------------------------------------------------- Sequential

MeshTensor Sequential::forward(const MeshTensor& x, bool training) {
    MeshTensor cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur, training);
    return cur;
}

MeshTensor Sequential::backward(const MeshTensor& grad_out) {
    MeshTensor cur = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
}

void Sequential::collect_params(std::vector<ParamView>& out) {
    for (auto& layer : layers_) layer->collect_params(out);
}

void Sequential::collect_buffers(std::vector<ParamView>& out) {
    for (auto& layer : layers_) layer->collect_buffers(out);
}

// ---------------------------------------------------------------- ResBlock

ResBlock::ResBlock(int in_channels, int neck_channels, int out_channels,
                   std::shared_ptr<const OperatorSet> ops, KernelMask mask, bool force_projection,
                   std::mt19937_64& init_rng)
    : main_("resblock.main") {
    main_.emplace<Conv1x1>(in_channels, neck_channels, init_rng);
    main_.emplace<BatchNorm>(neck_channels);
    main_.emplace<ReLU>();
    main_.emplace<MeshConv>(neck_channels, neck_channels, ops, mask, init_rng);
    main_.emplace<BatchNorm>(neck_channels);
    main_.emplace<ReLU>();
    main_.emplace<Conv1x1>(neck_channels, out_channels, init_rng);
    main_.emplace<BatchNorm>(out_channels);
    if (force_projection || in_channels != out_channels) {
        shortcut_.emplace("resblock.shortcut");
        shortcut_->emplace<Conv1x1>(in_channels, out_channels, init_rng);
        shortcut_->emplace<BatchNorm>(out_channels);
    }
}

MeshTensor ResBlock::forward(const MeshTensor& x, bool training) {
    MeshTensor pre = main_.forward(x, training);
    if (shortcut_) {
        MeshTensor s = shortcut_->forward(x, training);
        for (std::size_t i = 0; i < pre.size(); ++i) pre.data[i] += s.data[i];
    } else {
        for (std::size_t i = 0; i < pre.size(); ++i) pre.data[i] += x.data[i];
    }
    relu_mask_.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) {
        relu_mask_[i] = pre.data[i] > 0.0;
        if (!relu_mask_[i]) pre.data[i] = 0.0;
    }
    return pre;
}

MeshTensor ResBlock::backward(const MeshTensor& grad_out) {
    MeshTensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!relu_mask_[i]) g.data[i] = 0.0;
    MeshTensor dx = main_.backward(g);
    if (shortcut_) {
        MeshTensor ds = shortcut_->backward(g);
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += ds.data[i];
    } else {
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += g.data[i];
    }
    return dx;
}

void ResBlock::collect_params(std::vector<ParamView>& out) {
    main_.collect_params(out);
    if (shortcut_) shortcut_->collect_params(out);
}

void ResBlock::collect_buffers(std::vector<ParamView>& out) {
    main_.collect_buffers(out);
    if (shortcut_) shortcut_->collect_buffers(out);
}

// -------------------------------------------------- finite difference check

GradCheckResult finite_difference_check(Layer& layer, const MeshTensor& input,
                                        std::mt19937_64& rng, double eps,
                                        int max_entries_per_block) {
    MeshTensor probe_out = layer.forward(input, true);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    MeshTensor weights = probe_out;
    for (auto& w : weights.data) w = dist(rng);

    auto loss = [&](const MeshTensor& x) {
        MeshTensor out = layer.forward(x, true);
        double j = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) j += out.data[i] * weights.data[i];
        return j;
    };

    zero_gradients(layer);
    loss(input);  // refresh caches
    MeshTensor input_grad = layer.backward(weights);

    auto rel_error = [](double analytic, double fd) {
        double denom = std::max(std::abs(analytic) + std::abs(fd), 1e-6);
        return std::abs(analytic - fd) / denom;
    };

    auto pick_indices = [&](std::size_t n) {
        std::vector<std::size_t> idx;
        if (max_entries_per_block <= 0 || n <= static_cast<std::size_t>(max_entries_per_block)) {
            for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
        } else {
            for (int j = 0; j < max_entries_per_block; ++j)
                idx.push_back(static_cast<std::size_t>(j) * n / max_entries_per_block);
        }
        return idx;
    };

    GradCheckResult result;
    for (auto& p : parameters(layer)) {
        GradCheckEntry entry{p.name, 0.0};
        for (std::size_t i : pick_indices(p.size)) {
            double saved = p.value[i];
            p.value[i] = saved + eps;
            double j1 = loss(input);
            p.value[i] = saved - eps;
            double j2 = loss(input);
            p.value[i] = saved;
            double fd = (j1 - j2) / (2.0 * eps);
            entry.max_rel_error = std::max(entry.max_rel_error, rel_error(p.grad[i], fd));
        }
        result.entries.push_back(entry);
        result.max_rel_error = std::max(result.max_rel_error, entry.max_rel_error);
    }

    GradCheckEntry entry{"input", 0.0};
    MeshTensor x = input;
    for (std::size_t i : pick_indices(x.size())) {
        double saved = x.data[i];
        x.data[i] = saved + eps;
        double j1 = loss(x);
        x.data[i] = saved - eps;
        double j2 = loss(x);
        x.data[i] = saved;
        double fd = (j1 - j2) / (2.0 * eps);
        entry.max_rel_error = std::max(entry.max_rel_error, rel_error(input_grad.data[i], fd));
    }
    result.entries.push_back(entry);
    result.max_rel_error = std::max(result.max_rel_error, entry.max_rel_error);

    // leave caches consistent with the unperturbed input
    zero_gradients(layer);
    loss(input);
    layer.backward(weights);
    return result;
}

}  // namespace sphcnn
