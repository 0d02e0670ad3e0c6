#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sphcnn/operators.hpp"
#include "sphcnn/tensor.hpp"

namespace sphcnn {

/// View of one parameter (or buffer) block. `grad` is null for
/// non-trainable buffers such as batch-norm running statistics.
struct ParamView {
    std::string name;
    double* value = nullptr;
    double* grad = nullptr;
    std::size_t size = 0;
};

/// Selects which of {identity, grad_x, grad_y, laplacian} participate in a
/// MeshConv kernel.
struct KernelMask {
    bool identity = true;
    bool grad_x = true;
    bool grad_y = true;
    bool laplacian = true;

    bool enabled(int k) const;
    int count() const;
    std::string to_string() const;            // subset of "IXYL"
    static KernelMask parse(const std::string& s);
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual MeshTensor forward(const MeshTensor& x, bool training) = 0;
    /// Accumulates parameter gradients and returns the gradient w.r.t. the
    /// most recent forward input.
    virtual MeshTensor backward(const MeshTensor& grad_out) = 0;
    virtual void collect_params(std::vector<ParamView>&) {}
    virtual void collect_buffers(std::vector<ParamView>&) {}
    virtual std::string name() const = 0;
};

std::vector<ParamView> parameters(Layer& layer);
std::vector<ParamView> buffers(Layer& layer);
std::size_t parameter_count(Layer& layer);
void zero_gradients(Layer& layer);

/// PDO convolution: out[o] = bias[o] + sum_i sum_k theta[o,i,k] L_k x[i]
/// with L_0..L_3 = identity, grad_x, grad_y, laplacian.
class MeshConv : public Layer {
public:
    MeshConv(int in_channels, int out_channels, std::shared_ptr<const OperatorSet> ops,
             KernelMask mask, std::mt19937_64& init_rng);

    MeshTensor forward(const MeshTensor& x, bool training) override;
    MeshTensor backward(const MeshTensor& grad_out) override;
    void collect_params(std::vector<ParamView>& out) override;
    std::string name() const override { return "meshconv"; }

    int in_channels() const { return in_channels_; }
    int out_channels() const { return out_channels_; }
    const KernelMask& mask() const { return mask_; }
    /// (out, in, K) where K = mask.count(); the last axis runs over the
    /// enabled operators in I, grad_x, grad_y, laplacian order.
    std::vector<double>& theta() { return theta_; }
    const std::vector<int>& active_ops() const { return active_ops_; }
    std::vector<double>& bias() { return bias_; }

private:
    int in_channels_, out_channels_;
    std::shared_ptr<const OperatorSet> ops_;
    KernelMask mask_;
    std::vector<int> active_ops_;
    std::vector<double> theta_, bias_;
    std::vector<double> theta_grad_, bias_grad_;
    // forward cache
    int cached_batch_ = 0;
    std::vector<double> basis_;  // (B, in*K, V)
};

/// Zero-extends a coarse signal to the next finer level, then applies a
/// regular MeshConv with the fine-level operators.
class MeshConvTranspose : public Layer {
public:
    MeshConvTranspose(int in_channels, int out_channels,
                      std::shared_ptr<const OperatorSet> fine_ops, KernelMask mask,
                      std::mt19937_64& init_rng);

    MeshTensor forward(const MeshTensor& x, bool training) override;
    MeshTensor backward(const MeshTensor& grad_out) override;
    void collect_params(std::vector<ParamView>& out) override;
    std::string name() const override { return "meshconv_t"; }

private:
    MeshConv conv_;
    int fine_level_;
    int coarse_verts_ = 0;
};

/// Restriction to the nested coarse vertex prefix (level l -> l-1).
class DownSamp : public Layer {
public:
    MeshTensor forward(const MeshTensor& x, bool training) override;
    MeshTensor backward(const MeshTensor& grad_out) override;
    std::string name() const override { return "downsamp"; }

private:
    int fine_verts_ = 0;
    int fine_level_ = 0;
};

/// Per-vertex linear map across channels.
class Conv1x1 : public Layer {
public:
    Conv1x1(int in_channels, int out_channels, std::mt19937_64& init_rng);

    MeshTensor forward(const MeshTensor& x, bool training) override;
    MeshTensor backward(const MeshTensor& grad_out) override;
    void collect_params(std::vector<ParamView>& out) override;
    std::string name() const override { return "conv1x1"; }

    std::vector<double>& weight() { return weight_; }  // (out, in)

protected:
    int in_channels_, out_channels_;
    std::vector<double> weight_, bias_;
    std::vector<double> weight_grad_, bias_grad_;
    MeshTensor cached_input_;
};

class FullyConnected : public Conv1x1 {
public:
    using Conv1x1::Conv1x1;
    std::string name() const override { return "fc"; }
};

class BatchNorm : public Layer {
public:
    explicit BatchNorm(int channels, double eps = 1e-5, double momentum = 0.1);

    MeshTensor forward(const MeshTensor& x, bool training) override;
    MeshTensor backward(const MeshTensor& grad_out) override;
    void collect_params(std::vector<ParamView>& out) override;
    void collect_buffers(std::vector<ParamView>& out) override;
    std::string name() const override { return "batchnorm"; }

private:
    int channels_;
    double eps_, momentum_;
    std::vector<double> gamma_, beta_, gamma_grad_, beta_grad_;
    std::vector<double> running_mean_, running_var_;
    // training-mode cache
    bool cached_training_ = false;
    std::vector<double> xhat_, inv_std_;
    int cached_batch_ = 0, cached_verts_ = 0, cached_level_ = -1;
};

class ReLU : public Layer {
public:
    MeshTensor forward(const MeshTensor& x, bool training) override;
    MeshTensor backward(const MeshTensor& grad_out) override;
    std::string name() const override { return "relu"; }

private:
    std::vector<char> mask_;
    MeshTensor shape_;
};

/// Inverted-scaling dropout; identity in eval mode or at rate 0.
class Dropout : public Layer {
public:
    Dropout(double rate, std::shared_ptr<std::mt19937_64> rng);

    MeshTensor forward(const MeshTensor& x, bool training) override;
    MeshTensor backward(const MeshTensor& grad_out) override;
    std::string name() const override { return "dropout"; }

private:
    double rate_;
    std::shared_ptr<std::mt19937_64> rng_;
    std::vector<char> mask_;
    bool active_ = false;
};

/// Averages over the vertex axis: (B,C,V) -> flat (B,C,1).
class GlobalAvgPool : public Layer {
public:
    MeshTensor forward(const MeshTensor& x, bool training) override;
    MeshTensor backward(const MeshTensor& grad_out) override;
    std::string name() const override { return "avgpool"; }

private:
    int verts_ = 0;
    int level_ = 0;
};

class Sequential : public Layer {
public:
    Sequential() = default;
    explicit Sequential(std::string name) : name_(std::move(name)) {}

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    template <typename L, typename... Args>
    L& emplace(Args&&... args) {
        auto p = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *p;
        layers_.push_back(std::move(p));
        return ref;
    }

    MeshTensor forward(const MeshTensor& x, bool training) override;
    MeshTensor backward(const MeshTensor& grad_out) override;
    void collect_params(std::vector<ParamView>& out) override;
    void collect_buffers(std::vector<ParamView>& out) override;
    std::string name() const override { return name_; }

    std::size_t size() const { return layers_.size(); }
    Layer& at(std::size_t i) { return *layers_[i]; }

private:
    std::string name_ = "sequential";
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// Bottleneck residual block:
///   Conv1x1(a,b)+BN+ReLU -> MeshConv(b,b)+BN+ReLU -> Conv1x1(b,c)+BN,
/// added to an identity shortcut (a == c) or a projection Conv1x1(a,c)+BN,
/// followed by ReLU. `force_projection` is set when the block sits behind a
/// DownSamp so the shortcut always projects.
class ResBlock : public Layer {
public:
    ResBlock(int in_channels, int neck_channels, int out_channels,
             std::shared_ptr<const OperatorSet> ops, KernelMask mask, bool force_projection,
             std::mt19937_64& init_rng);

    MeshTensor forward(const MeshTensor& x, bool training) override;
    MeshTensor backward(const MeshTensor& grad_out) override;
    void collect_params(std::vector<ParamView>& out) override;
    void collect_buffers(std::vector<ParamView>& out) override;
    std::string name() const override { return "resblock"; }

private:
    Sequential main_;
    std::optional<Sequential> shortcut_;
    std::vector<char> relu_mask_;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradCheckResult {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
};

/// Central finite-difference check of every parameter block and of the
/// input gradient, against the analytic backward pass. The scalar loss is
/// sum(output * R) for a fixed random R. `max_entries_per_block` caps the
/// number of probed components per block (0 = all).
GradCheckResult finite_difference_check(Layer& layer, const MeshTensor& input,
                                        std::mt19937_64& rng, double eps = 1e-5,
                                        int max_entries_per_block = 0);

}  // namespace sphcnn
