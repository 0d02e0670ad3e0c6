#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sphcnn/layers.hpp"
#include "sphcnn/operators.hpp"

namespace sphcnn {

/// Thrown when training diverges (NaN loss) or a numerical check fails.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Task { classification, segmentation };

/// Named width schedule. `mnist`, `m40_full` and `m40_lean` are classifier
/// stacks; `unet` is the encoder-decoder segmenter.
enum class Preset { mnist, m40_full, m40_lean, unet };

struct ArchitectureSpec {
    Task task = Task::classification;
    Preset preset = Preset::mnist;
    int input_level = 4;
    int in_channels = 1;
    int classes = 10;
    double width_multiplier = 1.0;
    KernelMask mask;
    double dropout = 0.5;  // classifier head only

    std::string to_text() const;  // canonical single-line form
    static ArchitectureSpec from_text(const std::string& text);
};

ArchitectureSpec mnist_spec();
ArchitectureSpec m40_full_spec();
ArchitectureSpec m40_lean_spec();
ArchitectureSpec segmentation_2d3ds_spec();
ArchitectureSpec climate_spec();

/// A built network plus the RNG that drives its dropout stream.
struct Model {
    ArchitectureSpec spec;
    std::unique_ptr<Layer> net;
    std::shared_ptr<std::mt19937_64> dropout_rng;

    MeshTensor forward(const MeshTensor& x, bool training) { return net->forward(x, training); }
    MeshTensor backward(const MeshTensor& g) { return net->backward(g); }
};

Model build_model(const ArchitectureSpec& spec, OperatorCache& cache, std::uint64_t seed);

// ------------------------------------------------------------------- loss

struct ClassWeights {
    std::vector<double> weight;  // per class; 0 marks a dropped class
};

/// w_c = 1/(1.02 + ln f_c); frequency 0 marks a dropped class (weight 0),
/// negative frequencies or f > 1 are errors.
ClassWeights class_weights_from_frequencies(const std::vector<double>& frequencies);

ClassWeights uniform_class_weights(int classes);

struct LossResult {
    double loss = 0.0;
    MeshTensor grad_logits;
};

/// Softmax cross-entropy, numerically stable, mean over weighted
/// positions. Logits are (B, K, V) with V=1 for classification; labels are
/// row-major (B, V). Zero-weight labels are skipped.
LossResult cross_entropy(const MeshTensor& logits, const std::vector<int>& labels,
                         const ClassWeights& weights);

// --------------------------------------------------------------- optimizer

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(std::vector<ParamView> params, AdamConfig config = {});

    /// Applies one update from the gradients currently in the views, then
    /// zeroes them.
    void step(double lr);

    std::int64_t steps() const { return t_; }
    const AdamConfig& config() const { return config_; }
    // state access for checkpointing
    std::vector<double>& first_moment() { return m_; }
    std::vector<double>& second_moment() { return v_; }
    void set_steps(std::int64_t t) { t_ = t; }

private:
    std::vector<ParamView> params_;
    AdamConfig config_;
    std::int64_t t_ = 0;
    std::vector<double> m_, v_;
};

/// lr = lr0 * decay^floor(epoch / period)
double lr_schedule(int epoch, double lr0, double decay, int decay_period);

// ---------------------------------------------------------------- datasets

struct Dataset {
    int level = 0;
    int channels = 0;
    int verts = 0;
    std::vector<std::vector<double>> features;     // per sample, (C, V) row-major
    std::vector<int> labels;                       // classification
    std::vector<std::vector<int>> vertex_labels;   // segmentation

    bool segmentation() const { return !vertex_labels.empty(); }
    std::size_t size() const { return features.size(); }
};

/// Batch `count` samples starting at position `pos` of `order`.
MeshTensor make_batch(const Dataset& data, const std::vector<int>& order, std::size_t pos,
                      int count);

// ---------------------------------------------------------------- training

enum class ClassWeightMode { uniform, log_frequency };

struct TrainConfig {
    int batch_size = 16;
    double lr0 = 1e-2;
    double decay = 0.5;
    int decay_period = 10;
    int epochs = 30;
    std::uint64_t seed = 0;
    AdamConfig adam;
    ClassWeightMode weight_mode = ClassWeightMode::uniform;
    std::string checkpoint_dir;  // per-epoch checkpoints when non-empty
    bool verbose = false;        // epoch lines to stderr
};

struct EpochReport {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochReport> epochs;
};

/// One line per epoch, tab-separated:
/// epoch, lr, train_loss, train_acc, val_acc, seconds.
void write_train_report(const TrainReport& report, std::ostream& out);

TrainReport train(Model& model, const Dataset& train_data, const Dataset* val_data,
                  const TrainConfig& config);

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    double miou = 0.0;
    std::vector<double> per_class_iou;
};

/// Classes with zero weight in `weights` (when given) are excluded from
/// accuracy denominators and from the mIoU mean.
EvalResult evaluate(Model& model, const Dataset& data, const ClassWeights* weights = nullptr,
                    int batch_size = 32);

/// Per-vertex (segmentation) or per-sample (classification) predictions.
std::vector<std::vector<int>> predict(Model& model, const Dataset& data, int batch_size = 32);

// ------------------------------------------------------------- checkpoints

// Checkpoint file: magic "UGSC", version u16, length-prefixed canonical
// architecture text, epoch, parameter/buffer blobs (f64 LE), optional Adam
// state, dropout RNG state. Round-trips bitwise.
void save_checkpoint(const std::string& path, Model& model, const Adam* optimizer, int epoch);

struct LoadedCheckpoint {
    Model model;
    std::unique_ptr<Adam> optimizer;  // null when the file carries no state
    int epoch = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path, OperatorCache& cache);

// ---------------------------------------------------------------- harness

struct AblationRow {
    KernelMask mask;
    double accuracy = 0.0;
    std::size_t parameter_count = 0;
};

/// Trains one model per mask with identical seed and config.
std::vector<AblationRow> ablation_run(const ArchitectureSpec& base,
                                      const std::vector<KernelMask>& masks,
                                      const Dataset& train_data, const Dataset& test_data,
                                      const TrainConfig& config, OperatorCache& cache);

struct BenchmarkResult {
    int batch_size = 0;
    int batches = 0;
    double mean_ms = 0.0;
};

/// One warm-up batch (discarded), then the mean wall-clock per batch over
/// `iterations` timed batches in inference mode.
BenchmarkResult benchmark_inference(Model& model, int batch_size, int iterations = 64);

// ---------------------------------------------------------- gradient suite

struct GradCheckCase {
    std::string layer;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckCase> cases;
    bool all_pass = true;
};

/// Finite-difference sweep over every layer kind plus an end-to-end check
/// of the classifier on 20 sampled parameters.
GradCheckReport run_gradcheck_suite(int level, std::uint64_t seed, OperatorCache& cache);

}  // namespace sphcnn
