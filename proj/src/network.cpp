#include "sphcnn/network.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "sphcnn/rng.hpp"

namespace sphcnn {

namespace {

int scaled(int width, double multiplier) {
    return std::max(1, static_cast<int>(std::ceil(width * multiplier - 1e-9)));
}

const char* task_name(Task t) {
    return t == Task::classification ? "classification" : "segmentation";
}

const char* preset_name(Preset p) {
    switch (p) {
        case Preset::mnist: return "mnist";
        case Preset::m40_full: return "m40_full";
        case Preset::m40_lean: return "m40_lean";
        case Preset::unet: return "unet";
    }
    return "?";
}

struct ClassifierWidths {
    int stem;
    std::vector<std::array<int, 3>> blocks;  // (in, neck, out)
};

ClassifierWidths classifier_widths(Preset preset) {
    switch (preset) {
        case Preset::mnist: return {16, {{16, 16, 64}, {64, 64, 256}}};
        case Preset::m40_full: return {32, {{32, 32, 128}, {128, 128, 512}, {512, 512, 2048}}};
        case Preset::m40_lean: return {8, {{8, 8, 16}, {16, 16, 64}, {64, 64, 256}}};
        default: throw std::invalid_argument("classifier_widths: not a classifier preset");
    }
}

}  // namespace

std::string ArchitectureSpec::to_text() const {
    std::ostringstream out;
    out << "task=" << task_name(task) << " preset=" << preset_name(preset)
        << " level=" << input_level << " in=" << in_channels << " classes=" << classes
        << " mult=" << std::setprecision(17) << width_multiplier << " mask=" << mask.to_string()
        << " dropout=" << std::setprecision(17) << dropout;
    return out.str();
}

ArchitectureSpec ArchitectureSpec::from_text(const std::string& text) {
    ArchitectureSpec spec;
    std::istringstream in(text);
    std::string token;
    while (in >> token) {
        auto eq = token.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("architecture spec: bad token " + token);
        std::string key = token.substr(0, eq), value = token.substr(eq + 1);
        if (key == "task") {
            if (value == "classification") spec.task = Task::classification;
            else if (value == "segmentation") spec.task = Task::segmentation;
            else throw std::invalid_argument("architecture spec: bad task " + value);
        } else if (key == "preset") {
            if (value == "mnist") spec.preset = Preset::mnist;
            else if (value == "m40_full") spec.preset = Preset::m40_full;
            else if (value == "m40_lean") spec.preset = Preset::m40_lean;
            else if (value == "unet") spec.preset = Preset::unet;
            else throw std::invalid_argument("architecture spec: bad preset " + value);
        } else if (key == "level") spec.input_level = std::stoi(value);
        else if (key == "in") spec.in_channels = std::stoi(value);
        else if (key == "classes") spec.classes = std::stoi(value);
        else if (key == "mult") spec.width_multiplier = std::stod(value);
        else if (key == "mask") spec.mask = KernelMask::parse(value);
        else if (key == "dropout") spec.dropout = std::stod(value);
        else throw std::invalid_argument("architecture spec: unknown key " + key);
    }
    return spec;
}

ArchitectureSpec mnist_spec() {
    ArchitectureSpec s;
    s.task = Task::classification;
    s.preset = Preset::mnist;
    s.input_level = 4;
    s.in_channels = 1;
    s.classes = 10;
    return s;
}

ArchitectureSpec m40_full_spec() {
    ArchitectureSpec s;
    s.task = Task::classification;
    s.preset = Preset::m40_full;
    s.input_level = 5;
    s.in_channels = 6;
    s.classes = 40;
    return s;
}

ArchitectureSpec m40_lean_spec() {
    ArchitectureSpec s = m40_full_spec();
    s.preset = Preset::m40_lean;
    return s;
}

ArchitectureSpec segmentation_2d3ds_spec() {
    ArchitectureSpec s;
    s.task = Task::segmentation;
    s.preset = Preset::unet;
    s.input_level = 5;
    s.in_channels = 4;
    s.classes = 15;
    return s;
}

ArchitectureSpec climate_spec() {
    ArchitectureSpec s;
    s.task = Task::segmentation;
    s.preset = Preset::unet;
    s.input_level = 5;
    s.in_channels = 16;
    s.classes = 3;
    s.width_multiplier = 0.25;
    return s;
}

// ----------------------------------------------------------- UNet segmenter

namespace {

/// Encoder-decoder with skip concatenation at matching levels. Decoder
/// order per stage: MeshConvT -> Concat -> ResBlock.
class UNetSegmenter : public Layer {
public:
    UNetSegmenter(const ArchitectureSpec& spec, OperatorCache& cache, std::mt19937_64& rng) {
        const int depth = spec.input_level;
        if (depth < 1) throw std::invalid_argument("UNet: input level must be >= 1");
        const double m = spec.width_multiplier;
        std::vector<int> widths(depth + 1);
        for (int i = 0; i <= depth; ++i) widths[i] = scaled(std::min(32 << i, 512), m);

        in_conv_ = std::make_unique<MeshConv>(spec.in_channels, widths[0],
                                              cache.operators(depth), spec.mask, rng);
        for (int i = 1; i <= depth; ++i) {
            auto stage = std::make_unique<Sequential>("unet.enc" + std::to_string(i));
            stage->emplace<DownSamp>();
            stage->emplace<ResBlock>(widths[i - 1], widths[i - 1], widths[i],
                                     cache.operators(depth - i), spec.mask, true, rng);
            encoder_.push_back(std::move(stage));
        }

        int prev = widths[depth];
        const int floor_width = scaled(32, m);
        for (int t = 1; t <= depth; ++t) {
            DecoderStage stage;
            stage.up = std::make_unique<MeshConvTranspose>(prev, prev, cache.operators(t),
                                                           spec.mask, rng);
            int skip = widths[depth - t];
            int out = std::max(skip / 2, floor_width);
            stage.block = std::make_unique<ResBlock>(prev + skip, out, out, cache.operators(t),
                                                     spec.mask, false, rng);
            stage.skip_channels = skip;
            prev = out;
            decoder_.push_back(std::move(stage));
        }
        out_conv_ = std::make_unique<MeshConv>(prev, spec.classes, cache.operators(depth),
                                               spec.mask, rng);
        depth_ = depth;
    }

    MeshTensor forward(const MeshTensor& x, bool training) override {
        skips_.assign(depth_ + 1, MeshTensor{});
        MeshTensor cur = in_conv_->forward(x, training);
        skips_[depth_] = cur;  // skip at the input level
        for (int i = 1; i <= depth_; ++i) {
            cur = encoder_[i - 1]->forward(cur, training);
            if (i < depth_) skips_[depth_ - i] = cur;
        }
        for (int t = 1; t <= depth_; ++t) {
            MeshTensor up = decoder_[t - 1].up->forward(cur, training);
            const MeshTensor& skip = skips_[t];
            MeshTensor cat(up.batch, up.channels + skip.channels, up.verts, up.level);
            for (int b = 0; b < up.batch; ++b) {
                std::memcpy(cat.sample(b), up.sample(b),
                            sizeof(double) * up.channels * up.verts);
                std::memcpy(cat.sample(b) + static_cast<std::size_t>(up.channels) * up.verts,
                            skip.sample(b), sizeof(double) * skip.channels * skip.verts);
            }
            cur = decoder_[t - 1].block->forward(cat, training);
        }
        return out_conv_->forward(cur, training);
    }

    MeshTensor backward(const MeshTensor& grad_out) override {
        std::vector<MeshTensor> skip_grads(depth_ + 1);
        MeshTensor g = out_conv_->backward(grad_out);
        for (int t = depth_; t >= 1; --t) {
            MeshTensor gcat = decoder_[t - 1].block->backward(g);
            int skip_ch = decoder_[t - 1].skip_channels;
            int up_ch = gcat.channels - skip_ch;
            MeshTensor gup(gcat.batch, up_ch, gcat.verts, gcat.level);
            MeshTensor gskip(gcat.batch, skip_ch, gcat.verts, gcat.level);
            for (int b = 0; b < gcat.batch; ++b) {
                std::memcpy(gup.sample(b), gcat.sample(b),
                            sizeof(double) * up_ch * gcat.verts);
                std::memcpy(gskip.sample(b),
                            gcat.sample(b) + static_cast<std::size_t>(up_ch) * gcat.verts,
                            sizeof(double) * skip_ch * gcat.verts);
            }
            skip_grads[t] = std::move(gskip);
            g = decoder_[t - 1].up->backward(gup);
        }
        for (int i = depth_; i >= 1; --i) {
            g = encoder_[i - 1]->backward(g);
            MeshTensor& sg = skip_grads[depth_ - i + 1];
            for (std::size_t j = 0; j < g.size(); ++j) g.data[j] += sg.data[j];
        }
        return in_conv_->backward(g);
    }

    void collect_params(std::vector<ParamView>& out) override {
        in_conv_->collect_params(out);
        for (auto& s : encoder_) s->collect_params(out);
        for (auto& d : decoder_) {
            d.up->collect_params(out);
            d.block->collect_params(out);
        }
        out_conv_->collect_params(out);
    }

    void collect_buffers(std::vector<ParamView>& out) override {
        for (auto& s : encoder_) s->collect_buffers(out);
        for (auto& d : decoder_) d.block->collect_buffers(out);
    }

    std::string name() const override { return "unet"; }

private:
    struct DecoderStage {
        std::unique_ptr<MeshConvTranspose> up;
        std::unique_ptr<ResBlock> block;
        int skip_channels = 0;
    };

    int depth_ = 0;
    std::unique_ptr<MeshConv> in_conv_, out_conv_;
    std::vector<std::unique_ptr<Sequential>> encoder_;
    std::vector<DecoderStage> decoder_;
    std::vector<MeshTensor> skips_;
};

std::unique_ptr<Layer> build_classifier(const ArchitectureSpec& spec, OperatorCache& cache,
                                        std::mt19937_64& rng,
                                        std::shared_ptr<std::mt19937_64> dropout_rng) {
    ClassifierWidths w = classifier_widths(spec.preset);
    const int nblocks = static_cast<int>(w.blocks.size());
    if (spec.input_level < nblocks)
        throw std::invalid_argument("classifier: input level too small for block stack");
    const double m = spec.width_multiplier;

    auto net = std::make_unique<Sequential>("classifier");
    int level = spec.input_level;
    int cur = scaled(w.stem, m);
    net->emplace<MeshConv>(spec.in_channels, cur, cache.operators(level), spec.mask, rng);
    net->emplace<BatchNorm>(cur);
    net->emplace<ReLU>();
    for (const auto& block : w.blocks) {
        --level;
        net->emplace<DownSamp>();
        net->emplace<ResBlock>(cur, scaled(block[1], m), scaled(block[2], m),
                               cache.operators(level), spec.mask, true, rng);
        cur = scaled(block[2], m);
    }
    net->emplace<GlobalAvgPool>();
    net->emplace<Dropout>(spec.dropout, std::move(dropout_rng));
    net->emplace<FullyConnected>(cur, spec.classes, rng);
    return net;
}

}  // namespace

Model build_model(const ArchitectureSpec& spec, OperatorCache& cache, std::uint64_t seed) {
    Model model;
    model.spec = spec;
    model.dropout_rng = std::make_shared<std::mt19937_64>(rng_stream(seed, "dropout"));
    std::mt19937_64 init_rng = rng_stream(seed, "init");
    if (spec.task == Task::classification) {
        model.net = build_classifier(spec, cache, init_rng, model.dropout_rng);
    } else {
        model.net = std::make_unique<UNetSegmenter>(spec, cache, init_rng);
    }
    return model;
}

// -------------------------------------------------------------------- loss

ClassWeights class_weights_from_frequencies(const std::vector<double>& frequencies) {
    ClassWeights cw;
    cw.weight.reserve(frequencies.size());
    for (double f : frequencies) {
        if (f < 0.0 || f > 1.0)
            throw std::invalid_argument("class_weights: frequency outside [0,1]");
        cw.weight.push_back(f == 0.0 ? 0.0 : 1.0 / (1.02 + std::log(f)));
    }
    return cw;
}

ClassWeights uniform_class_weights(int classes) {
    return ClassWeights{std::vector<double>(classes, 1.0)};
}

LossResult cross_entropy(const MeshTensor& logits, const std::vector<int>& labels,
                         const ClassWeights& weights) {
    const int b_count = logits.batch, k_count = logits.channels, v_count = logits.verts;
    if (static_cast<int>(weights.weight.size()) != k_count)
        throw std::invalid_argument("cross_entropy: weight length mismatch");
    if (labels.size() != static_cast<std::size_t>(b_count) * v_count)
        throw std::invalid_argument("cross_entropy: label count mismatch");

    LossResult result;
    result.grad_logits = MeshTensor(b_count, k_count, v_count, logits.level);
    double total = 0.0, weight_sum = 0.0;
    std::vector<double> p(k_count);
    for (int b = 0; b < b_count; ++b) {
        for (int v = 0; v < v_count; ++v) {
            int y = labels[static_cast<std::size_t>(b) * v_count + v];
            if (y < 0 || y >= k_count) throw std::invalid_argument("cross_entropy: label out of range");
            double w = weights.weight[y];
            if (w == 0.0) continue;
            double mx = logits.at(b, 0, v);
            for (int k = 1; k < k_count; ++k) mx = std::max(mx, logits.at(b, k, v));
            double lse = 0.0;
            for (int k = 0; k < k_count; ++k) {
                p[k] = std::exp(logits.at(b, k, v) - mx);
                lse += p[k];
            }
            for (int k = 0; k < k_count; ++k) p[k] /= lse;
            total += w * (std::log(lse) + mx - logits.at(b, y, v));
            weight_sum += w;
            for (int k = 0; k < k_count; ++k)
                result.grad_logits.at(b, k, v) = w * (p[k] - (k == y ? 1.0 : 0.0));
        }
    }
    if (weight_sum > 0.0) {
        result.loss = total / weight_sum;
        for (auto& g : result.grad_logits.data) g /= weight_sum;
    }
    return result;
}

// --------------------------------------------------------------- optimizer

Adam::Adam(std::vector<ParamView> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.size;
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    std::size_t off = 0;
    for (auto& p : params_) {
        for (std::size_t i = 0; i < p.size; ++i) {
            double g = p.grad[i];
            double& m = m_[off + i];
            double& v = v_[off + i];
            m = config_.beta1 * m + (1.0 - config_.beta1) * g;
            v = config_.beta2 * v + (1.0 - config_.beta2) * g * g;
            p.value[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + config_.eps);
            p.grad[i] = 0.0;
        }
        off += p.size;
    }
}

double lr_schedule(int epoch, double lr0, double decay, int decay_period) {
    if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
    return lr0 * std::pow(decay, epoch / decay_period);
}

// ---------------------------------------------------------------- training

MeshTensor make_batch(const Dataset& data, const std::vector<int>& order, std::size_t pos,
                      int count) {
    MeshTensor x(count, data.channels, data.verts, data.level);
    for (int i = 0; i < count; ++i) {
        const auto& f = data.features[order[pos + i]];
        std::memcpy(x.sample(i), f.data(), sizeof(double) * f.size());
    }
    return x;
}

namespace {

std::vector<int> batch_labels(const Dataset& data, const std::vector<int>& order,
                              std::size_t pos, int count) {
    std::vector<int> labels;
    if (data.segmentation()) {
        labels.reserve(static_cast<std::size_t>(count) * data.verts);
        for (int i = 0; i < count; ++i) {
            const auto& vl = data.vertex_labels[order[pos + i]];
            labels.insert(labels.end(), vl.begin(), vl.end());
        }
    } else {
        labels.reserve(count);
        for (int i = 0; i < count; ++i) labels.push_back(data.labels[order[pos + i]]);
    }
    return labels;
}

ClassWeights training_weights(const Dataset& data, int classes, ClassWeightMode mode) {
    if (mode == ClassWeightMode::uniform) return uniform_class_weights(classes);
    std::vector<double> freq(classes, 0.0);
    double total = 0.0;
    auto count = [&](int y) {
        if (y >= 0 && y < classes) {
            freq[y] += 1.0;
            total += 1.0;
        }
    };
    if (data.segmentation()) {
        for (const auto& vl : data.vertex_labels)
            for (int y : vl) count(y);
    } else {
        for (int y : data.labels) count(y);
    }
    for (auto& f : freq) f /= total;
    return class_weights_from_frequencies(freq);
}

}  // namespace

void write_train_report(const TrainReport& report, std::ostream& out) {
    out << std::setprecision(10);
    for (const auto& e : report.epochs)
        out << e.epoch << '\t' << e.lr << '\t' << e.train_loss << '\t' << e.train_acc << '\t'
            << e.val_acc << '\t' << e.seconds << '\n';
}

TrainReport train(Model& model, const Dataset& train_data, const Dataset* val_data,
                  const TrainConfig& config) {
    if (train_data.level != model.spec.input_level)
        throw std::invalid_argument("train: dataset level does not match model input level");
    ClassWeights weights =
        training_weights(train_data, model.spec.classes, config.weight_mode);

    Adam optimizer(parameters(*model.net), config.adam);
    std::mt19937_64 shuffle_rng = rng_stream(config.seed, "shuffle");
    std::vector<int> order(train_data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    TrainReport report;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto start = std::chrono::steady_clock::now();
        double lr = lr_schedule(epoch, config.lr0, config.decay, config.decay_period);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::int64_t correct = 0, seen = 0, batches = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += config.batch_size) {
            int count = static_cast<int>(std::min<std::size_t>(config.batch_size,
                                                               order.size() - pos));
            MeshTensor x = make_batch(train_data, order, pos, count);
            std::vector<int> labels = batch_labels(train_data, order, pos, count);
            MeshTensor logits = model.forward(x, true);
            LossResult loss = cross_entropy(logits, labels, weights);
            if (!std::isfinite(loss.loss))
                throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
            loss_sum += loss.loss;
            ++batches;
            for (int i = 0; i < count; ++i) {
                for (int v = 0; v < logits.verts; ++v) {
                    int y = labels[static_cast<std::size_t>(i) * logits.verts + v];
                    if (weights.weight[y] == 0.0) continue;
                    int argmax = 0;
                    for (int k = 1; k < logits.channels; ++k)
                        if (logits.at(i, k, v) > logits.at(i, argmax, v)) argmax = k;
                    correct += argmax == y;
                    ++seen;
                }
            }
            model.backward(loss.grad_logits);
            optimizer.step(lr);
        }

        EpochReport er;
        er.epoch = epoch;
        er.lr = lr;
        er.train_loss = loss_sum / std::max<std::int64_t>(1, batches);
        er.train_acc = seen ? static_cast<double>(correct) / seen : 0.0;
        if (val_data) er.val_acc = evaluate(model, *val_data, &weights).accuracy;
        er.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                         .count();
        report.epochs.push_back(er);
        if (config.verbose) {
            TrainReport one;
            one.epochs.push_back(er);
            write_train_report(one, std::cerr);
        }
        if (!config.checkpoint_dir.empty()) {
            std::ostringstream path;
            path << config.checkpoint_dir << "/epoch_" << std::setfill('0') << std::setw(3)
                 << epoch << ".ckpt";
            save_checkpoint(path.str(), model, &optimizer, epoch);
        }
    }
    return report;
}

std::vector<std::vector<int>> predict(Model& model, const Dataset& data, int batch_size) {
    std::vector<int> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::vector<std::vector<int>> out(data.size());
    for (std::size_t pos = 0; pos < order.size(); pos += batch_size) {
        int count = static_cast<int>(std::min<std::size_t>(batch_size, order.size() - pos));
        MeshTensor logits = model.forward(make_batch(data, order, pos, count), false);
        for (int i = 0; i < count; ++i) {
            std::vector<int> pred(logits.verts);
            for (int v = 0; v < logits.verts; ++v) {
                int argmax = 0;
                for (int k = 1; k < logits.channels; ++k)
                    if (logits.at(i, k, v) > logits.at(i, argmax, v)) argmax = k;
                pred[v] = argmax;
            }
            out[pos + i] = std::move(pred);
        }
    }
    return out;
}

EvalResult evaluate(Model& model, const Dataset& data, const ClassWeights* weights,
                    int batch_size) {
    if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
    const int k_count = model.spec.classes;
    auto active = [&](int c) { return !weights || weights->weight[c] != 0.0; };

    std::vector<std::int64_t> tp(k_count, 0), fp(k_count, 0), fn(k_count, 0), total(k_count, 0);
    auto preds = predict(model, data, batch_size);
    for (std::size_t s = 0; s < data.size(); ++s) {
        const auto& pred = preds[s];
        for (std::size_t v = 0; v < pred.size(); ++v) {
            int y = data.segmentation() ? data.vertex_labels[s][v] : data.labels[s];
            if (!active(y)) continue;
            int p = pred[v];
            ++total[y];
            if (p == y) {
                ++tp[y];
            } else {
                ++fn[y];
                if (p >= 0 && p < k_count) ++fp[p];
            }
        }
    }

    EvalResult result;
    std::int64_t correct = 0, seen = 0;
    result.per_class_accuracy.assign(k_count, 0.0);
    result.per_class_iou.assign(k_count, 0.0);
    double iou_sum = 0.0;
    int iou_classes = 0;
    for (int c = 0; c < k_count; ++c) {
        correct += tp[c];
        seen += total[c];
        if (total[c] > 0) result.per_class_accuracy[c] = static_cast<double>(tp[c]) / total[c];
        std::int64_t denom = tp[c] + fp[c] + fn[c];
        if (active(c) && denom > 0) {
            result.per_class_iou[c] = static_cast<double>(tp[c]) / denom;
            iou_sum += result.per_class_iou[c];
            ++iou_classes;
        }
    }
    result.accuracy = seen ? static_cast<double>(correct) / seen : 0.0;
    result.miou = iou_classes ? iou_sum / iou_classes : 0.0;
    return result;
}

// ------------------------------------------------------------- checkpoints

namespace {

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void put_doubles(std::ostream& out, const std::vector<ParamView>& views, bool grads = false) {
    std::uint64_t total = 0;
    for (const auto& p : views) total += p.size;
    put(out, total);
    for (const auto& p : views) {
        const double* src = grads ? p.grad : p.value;
        out.write(reinterpret_cast<const char*>(src), sizeof(double) * p.size);
    }
}

void get_doubles(std::istream& in, const std::vector<ParamView>& views) {
    std::uint64_t total = get<std::uint64_t>(in);
    std::uint64_t expect = 0;
    for (const auto& p : views) expect += p.size;
    if (total != expect) throw std::runtime_error("checkpoint: parameter count mismatch");
    for (const auto& p : views) {
        in.read(reinterpret_cast<char*>(p.value), sizeof(double) * p.size);
        if (!in) throw std::runtime_error("checkpoint: truncated parameters");
    }
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model, const Adam* optimizer, int epoch) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write("UGSC", 4);
    put<std::uint16_t>(out, 1);
    std::string spec = model.spec.to_text();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.size()));
    out.write(spec.data(), spec.size());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(epoch));
    put_doubles(out, parameters(*model.net));
    put_doubles(out, buffers(*model.net));
    put<std::uint8_t>(out, optimizer ? 1 : 0);
    if (optimizer) {
        auto& opt = *const_cast<Adam*>(optimizer);
        put(out, opt.config().beta1);
        put(out, opt.config().beta2);
        put(out, opt.config().eps);
        put<std::int64_t>(out, opt.steps());
        put<std::uint64_t>(out, opt.first_moment().size());
        out.write(reinterpret_cast<const char*>(opt.first_moment().data()),
                  sizeof(double) * opt.first_moment().size());
        out.write(reinterpret_cast<const char*>(opt.second_moment().data()),
                  sizeof(double) * opt.second_moment().size());
    }
    std::ostringstream rng;
    rng << *model.dropout_rng;
    std::string rng_state = rng.str();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(rng_state.size()));
    out.write(rng_state.data(), rng_state.size());
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, OperatorCache& cache) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "UGSC", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    if (get<std::uint16_t>(in) != 1) throw std::runtime_error("checkpoint: unsupported version");
    auto spec_len = get<std::uint32_t>(in);
    std::string spec_text(spec_len, '\0');
    in.read(spec_text.data(), spec_len);
    LoadedCheckpoint loaded;
    loaded.epoch = static_cast<int>(get<std::uint32_t>(in));
    loaded.model = build_model(ArchitectureSpec::from_text(spec_text), cache, 0);
    get_doubles(in, parameters(*loaded.model.net));
    get_doubles(in, buffers(*loaded.model.net));
    if (get<std::uint8_t>(in)) {
        AdamConfig cfg;
        cfg.beta1 = get<double>(in);
        cfg.beta2 = get<double>(in);
        cfg.eps = get<double>(in);
        auto t = get<std::int64_t>(in);
        auto n = get<std::uint64_t>(in);
        loaded.optimizer = std::make_unique<Adam>(parameters(*loaded.model.net), cfg);
        if (loaded.optimizer->first_moment().size() != n)
            throw std::runtime_error("checkpoint: optimizer state size mismatch");
        in.read(reinterpret_cast<char*>(loaded.optimizer->first_moment().data()),
                sizeof(double) * n);
        in.read(reinterpret_cast<char*>(loaded.optimizer->second_moment().data()),
                sizeof(double) * n);
        loaded.optimizer->set_steps(t);
    }
    auto rng_len = get<std::uint32_t>(in);
    std::string rng_state(rng_len, '\0');
    in.read(rng_state.data(), rng_len);
    if (!in) throw std::runtime_error("checkpoint: truncated rng state");
    std::istringstream rs(rng_state);
    rs >> *loaded.model.dropout_rng;
    return loaded;
}

// ----------------------------------------------------------------- harness

std::vector<AblationRow> ablation_run(const ArchitectureSpec& base,
                                      const std::vector<KernelMask>& masks,
                                      const Dataset& train_data, const Dataset& test_data,
                                      const TrainConfig& config, OperatorCache& cache) {
    if (masks.empty()) throw std::invalid_argument("ablation_run: no masks");
    std::vector<AblationRow> rows;
    for (const auto& mask : masks) {
        ArchitectureSpec spec = base;
        spec.mask = mask;
        Model model = build_model(spec, cache, config.seed);
        train(model, train_data, nullptr, config);
        AblationRow row;
        row.mask = mask;
        row.accuracy = evaluate(model, test_data).accuracy;
        row.parameter_count = parameter_count(*model.net);
        rows.push_back(row);
    }
    return rows;
}

BenchmarkResult benchmark_inference(Model& model, int batch_size, int iterations) {
    std::mt19937_64 rng = rng_stream(0, "bench");
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const int verts = static_cast<int>(level_stats(model.spec.input_level).n_v);
    MeshTensor x(batch_size, model.spec.in_channels, verts, model.spec.input_level);
    for (auto& v : x.data) v = dist(rng);

    model.forward(x, false);  // warm-up batch, disregarded
    auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < iterations; ++i) model.forward(x, false);
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                         .count();
    return {batch_size, iterations, seconds / iterations * 1000.0};
}

// ---------------------------------------------------------- gradient suite

GradCheckReport run_gradcheck_suite(int level, std::uint64_t seed, OperatorCache& cache) {
    GradCheckReport report;
    std::mt19937_64 rng = rng_stream(seed, "gradcheck");
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const int verts = static_cast<int>(level_stats(level).n_v);

    auto random_tensor = [&](int b, int c, int v, int lvl) {
        MeshTensor t(b, c, v, lvl);
        for (auto& x : t.data) x = dist(rng);
        return t;
    };

    auto run_case = [&](const std::string& name, Layer& layer, const MeshTensor& input,
                        double tolerance, int cap = 0) {
        GradCheckCase c;
        c.layer = name;
        c.tolerance = tolerance;
        c.max_rel_error = finite_difference_check(layer, input, rng, 1e-5, cap).max_rel_error;
        c.pass = c.max_rel_error <= tolerance;
        report.cases.push_back(c);
        report.all_pass = report.all_pass && c.pass;
    };

    {
        MeshConv layer(3, 4, cache.operators(level), KernelMask{}, rng);
        run_case("meshconv", layer, random_tensor(2, 3, verts, level), 1e-4);
    }
    {
        MeshConvTranspose layer(3, 4, cache.operators(level), KernelMask{}, rng);
        const int coarse = static_cast<int>(level_stats(level - 1).n_v);
        run_case("meshconv_t", layer, random_tensor(2, 3, coarse, level - 1), 1e-4);
    }
    {
        Conv1x1 layer(3, 4, rng);
        run_case("conv1x1", layer, random_tensor(2, 3, verts, level), 1e-4);
    }
    {
        DownSamp layer;
        run_case("downsamp", layer, random_tensor(2, 3, verts, level), 1e-4);
    }
    {
        GlobalAvgPool layer;
        run_case("avgpool", layer, random_tensor(2, 3, verts, level), 1e-4);
    }
    {
        FullyConnected layer(6, 4, rng);
        run_case("fc", layer, random_tensor(2, 6, 1, -1), 1e-4);
    }
    {
        ReLU layer;
        run_case("relu", layer, random_tensor(2, 3, verts, level), 1e-4);
    }
    {
        BatchNorm layer(3);
        run_case("batchnorm", layer, random_tensor(2, 3, verts, level), 1e-3);
    }
    {
        // end-to-end classifier, 20 sampled parameters
        ArchitectureSpec spec = mnist_spec();
        spec.input_level = level;
        spec.width_multiplier = 0.5;
        spec.dropout = 0.0;  // finite differences need a deterministic forward
        Model model = build_model(spec, cache, seed);
        MeshTensor input = random_tensor(2, 1, verts, level);
        run_case("classifier", *model.net, input, 1e-3, 2);
    }
    return report;
}

}  // namespace sphcnn
