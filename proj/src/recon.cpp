#include "fnaf/recon.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fnaf/grid_io.hpp"
#include "fnaf/rng.hpp"

namespace fnaf {

using kernels::ConvShape;
using kernels::Tensor;

namespace {

constexpr const char* kModule = "recon";

void check_finite(const Tensor& t, std::size_t layer) {
    if (!kernels::all_finite(t))
        throw Error(ErrorKind::Numeric, kModule, "non-finite activation in layer " + std::to_string(layer));
}

} // namespace

void Architecture::validate() const {
    if (channels.empty()) throw Error(ErrorKind::Config, kModule, "architecture needs at least one level");
    for (int c : channels)
        if (c < 1) throw Error(ErrorKind::Config, kModule, "channel counts must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw Error(ErrorKind::Config, kModule, "kernel size must be odd");
}

std::string_view to_string(LossKind kind) { return kind == LossKind::L1 ? "l1" : "ssim"; }

LossKind loss_kind_from_string(std::string_view s) {
    if (s == "l1" || s == "L1") return LossKind::L1;
    if (s == "ssim" || s == "SSIM") return LossKind::Ssim;
    throw Error(ErrorKind::Config, kModule, "unknown loss kind '" + std::string(s) + "'");
}

OutputLoss recon_loss(const Image2D& output, const Image2D& target, const LossSpec& loss) {
    require_same_shape(output, target, kModule);
    OutputLoss out;
    if (loss.kind == LossKind::L1) {
        out.grad = Image2D(output.rows(), output.cols());
        const double inv_n = 1.0 / static_cast<double>(output.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < output.size(); ++i) {
            const double d = output[i] - target[i];
            acc += std::abs(d);
            out.grad[i] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
        }
        out.value = acc * inv_n;
    } else {
        const double s = ssim_with_grad(output, target, out.grad);
        out.value = 1.0 - s;
        for (auto& g : out.grad.data()) g = -g;
    }
    return out;
}

double recon_loss_value(const Image2D& output, const Image2D& target, const LossSpec& loss) {
    if (loss.kind == LossKind::Ssim) return 1.0 - ssim(output, target);
    require_same_shape(output, target, kModule);
    double acc = 0.0;
    for (std::size_t i = 0; i < output.size(); ++i) acc += std::abs(output[i] - target[i]);
    return acc / static_cast<double>(output.size());
}

// Model -------------------------------------------------------------------

struct ReconModel::Cache {
    int rows = 0, cols = 0; // unpadded
    int ph = 0, pw = 0;     // padded
    std::vector<Tensor> inputs;  // per conv layer
    std::vector<Tensor> outputs; // per conv layer, post-activation
};

ReconModel::ReconModel(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)), seed_(seed) {
    arch_.validate();
    const int depth = arch_.depth();
    const auto& ch = arch_.channels;
    std::size_t offset = 0;
    auto add = [&](int cin, int cout, int k) {
        ConvLayer l;
        l.shape = ConvShape{cin, cout, k, 0, 0};
        l.weight_offset = offset;
        offset += l.shape.weight_count();
        l.bias_offset = offset;
        offset += static_cast<std::size_t>(cout);
        layers_.push_back(l);
    };
    for (int i = 0; i < depth; ++i) add(i == 0 ? 1 : ch[i - 1], ch[i], arch_.kernel);
    for (int i = depth - 2; i >= 0; --i) add(ch[i + 1] + ch[i], ch[i], arch_.kernel);
    add(ch[0], 1, 1);

    params_.assign(offset, 0.0);
    Rng rng(derive_seed(seed, "recon-init"));
    for (std::size_t li = 0; li + 1 < layers_.size(); ++li) {
        const auto& l = layers_[li];
        const double stddev = std::sqrt(2.0 / (l.shape.cin * l.shape.k * l.shape.k));
        for (std::size_t i = 0; i < l.shape.weight_count(); ++i) params_[l.weight_offset + i] = stddev * rng.normal();
    }
}

Image2D ReconModel::forward(const Image2D& x, Cache* cache) const {
    const int depth = arch_.depth();
    const int mult = 1 << (depth - 1);
    const int rows = static_cast<int>(x.rows()), cols = static_cast<int>(x.cols());
    const int ph = (rows + mult - 1) / mult * mult, pw = (cols + mult - 1) / mult * mult;

    Tensor input(1, ph, pw);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) input.v[static_cast<std::size_t>(r) * pw + c] = x(r, c);

    std::vector<Tensor> inputs(layers_.size()), outputs(layers_.size());
    auto run = [&](std::size_t li, Tensor in, bool relu) -> const Tensor& {
        const auto& l = layers_[li];
        ConvShape s = l.shape;
        s.h = in.h;
        s.w = in.w;
        Tensor out(s.cout, s.h, s.w);
        kernels::parallel::conv2d_forward(s, in.v, std::span(params_).subspan(l.weight_offset, s.weight_count()),
                                          std::span(params_).subspan(l.bias_offset, s.cout), out.v);
        if (relu) kernels::relu_inplace(out);
        check_finite(out, li);
        inputs[li] = std::move(in);
        outputs[li] = std::move(out);
        return outputs[li];
    };

    for (int i = 0; i < depth; ++i) run(i, i == 0 ? input : kernels::avg_pool2(outputs[i - 1]), true);
    std::size_t li = depth;
    const Tensor* prev = &outputs[depth - 1];
    for (int i = depth - 2; i >= 0; --i, ++li)
        prev = &run(li, kernels::concat(kernels::upsample2(*prev), outputs[i]), true);
    const Tensor& head = run(li, *prev, false);

    Image2D out(x.rows(), x.cols());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out(r, c) = x(r, c) + head.v[static_cast<std::size_t>(r) * pw + c];

    if (cache) {
        cache->rows = rows;
        cache->cols = cols;
        cache->ph = ph;
        cache->pw = pw;
        cache->inputs = std::move(inputs);
        cache->outputs = std::move(outputs);
    }
    return out;
}

void ReconModel::backward(const Cache& cache, const Image2D& grad_output, std::span<double> grad,
                          double weight) const {
    const int depth = arch_.depth();
    const auto& ch = arch_.channels;
    auto conv_back = [&](std::size_t li, const Tensor& g_out, bool need_input_grad) {
        const auto& l = layers_[li];
        ConvShape s = l.shape;
        s.h = g_out.h;
        s.w = g_out.w;
        Tensor g_in;
        if (need_input_grad) g_in = Tensor(s.cin, s.h, s.w);
        kernels::parallel::conv2d_backward(s, cache.inputs[li].v,
                                           std::span(params_).subspan(l.weight_offset, s.weight_count()), g_out.v,
                                           g_in.v, grad.subspan(l.weight_offset, s.weight_count()),
                                           grad.subspan(l.bias_offset, s.cout));
        return g_in;
    };

    Tensor g_head(1, cache.ph, cache.pw);
    for (int r = 0; r < cache.rows; ++r)
        for (int c = 0; c < cache.cols; ++c)
            g_head.v[static_cast<std::size_t>(r) * cache.pw + c] = weight * grad_output(r, c);

    const std::size_t head = layers_.size() - 1;
    Tensor g = conv_back(head, g_head, true);

    std::vector<Tensor> g_enc(depth);
    for (int i = 0; i < depth; ++i) g_enc[i] = Tensor(ch[i], cache.outputs[i].h, cache.outputs[i].w);

    for (int i = 0; i <= depth - 2; ++i) {
        const std::size_t li = depth + (depth - 2 - i);
        kernels::relu_backward(cache.outputs[li], g);
        Tensor g_in = conv_back(li, g, true);
        Tensor g_up, g_skip;
        kernels::split(g_in, ch[i + 1], g_up, g_skip);
        for (std::size_t k = 0; k < g_skip.v.size(); ++k) g_enc[i].v[k] += g_skip.v[k];
        g = kernels::upsample2_backward(g_up);
    }
    for (std::size_t k = 0; k < g.v.size(); ++k) g_enc[depth - 1].v[k] += g.v[k];

    for (int i = depth - 1; i >= 0; --i) {
        kernels::relu_backward(cache.outputs[i], g_enc[i]);
        Tensor g_in = conv_back(i, g_enc[i], i > 0);
        if (i > 0) {
            Tensor g_prev = kernels::avg_pool2_backward(g_in, cache.outputs[i - 1].h, cache.outputs[i - 1].w);
            for (std::size_t k = 0; k < g_prev.v.size(); ++k) g_enc[i - 1].v[k] += g_prev.v[k];
        }
    }
}

Image2D ReconModel::reconstruct(const Image2D& x) const {
    if (x.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty input image");
    return forward(x, nullptr);
}

double ReconModel::value_and_grad(const Image2D& x, const OutputObjective& objective, std::span<double> grad,
                                  double weight) const {
    if (grad.size() != params_.size())
        throw Error(ErrorKind::InvalidInput, kModule, "gradient buffer has the wrong length");
    Cache cache;
    const Image2D out = forward(x, &cache);
    const OutputLoss l = objective(out);
    if (!std::isfinite(l.value)) throw Error(ErrorKind::Numeric, kModule, "non-finite loss");
    require_same_shape(l.grad, out, kModule);
    backward(cache, l.grad, grad, weight);
    return l.value;
}

// Data ----------------------------------------------------------------------

std::vector<ReconExample> make_examples(const std::vector<DatasetImage>& images, int acceleration,
                                        std::uint64_t mask_seed) {
    std::vector<ReconExample> out(images.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto& e = out[i];
        e.id = images[i].id;
        e.target = images[i].target;
        e.boxes = images[i].boxes;
        e.mask = generate_mask(MaskSpec::preset(acceleration, derive_seed(mask_seed, "mask/" + e.id)), e.target.cols());
        e.input = undersample(e.target, e.mask);
    }
    return out;
}

LossAndGrad loss_and_grad(const ReconModel& model, std::span<const ReconExample> batch, const LossSpec& loss) {
    if (batch.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty batch");
    const std::size_t n = batch.size(), p = model.parameter_count();
    std::vector<std::vector<double>> grads(n, std::vector<double>(p, 0.0));
    std::vector<double> values(n, 0.0);
    const double w = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = batch[i];
        values[i] = model.value_and_grad(
            ex.input, [&](const Image2D& out) { return recon_loss(out, ex.target, loss); }, grads[i], w);
    }
    LossAndGrad res;
    res.grad.assign(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        res.loss += values[i] * w;
        for (std::size_t k = 0; k < p; ++k) res.grad[k] += grads[i][k];
    }
    return res;
}

double mean_recon_loss(const ReconstructionModel& model, std::span<const ReconExample> data, const LossSpec& loss) {
    if (data.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty dataset");
    std::vector<double> values(data.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < data.size(); ++i)
        values[i] = recon_loss_value(model.reconstruct(data[i].input), data[i].target, loss);
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double mean_nmse(const ReconstructionModel& model, std::span<const ReconExample> data) {
    if (data.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty dataset");
    std::vector<double> values(data.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < data.size(); ++i) values[i] = nmse(model.reconstruct(data[i].input), data[i].target);
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

// Training ------------------------------------------------------------------

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw Error(ErrorKind::Config, kModule, "learning_rate must be >= 0");
    if (batch_size < 1) throw Error(ErrorKind::Config, kModule, "batch_size must be >= 1");
}

std::size_t select_checkpoint(const TrainHistory& history) {
    if (history.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty training history");
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i)
        if (history[i].val_recon_loss < history[best].val_recon_loss) best = i;
    return best;
}

TrainResult train_loop(const ReconModel& init, std::span<const ReconExample> train, std::span<const ReconExample> val,
                       const TrainConfig& cfg, const StepFunction& step, const ValAdvFunction& val_adv) {
    cfg.validate();
    if (train.empty() || val.empty()) throw Error(ErrorKind::InvalidInput, kModule, "training needs train and val data");
    TrainResult result{init, {}, -1};
    if (cfg.epochs == 0) return result;

    ReconModel model = init;
    const double initial = mean_recon_loss(model, val, cfg.loss);
    const double limit = 1e3 * std::max(initial, 1e-12);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<ReconExample> batch;
    std::vector<double> grad(model.parameter_count());
    std::size_t step_index = 0;
    std::vector<double> best_params(model.parameters().begin(), model.parameters().end());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "epoch/" + std::to_string(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

        double train_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            batch.clear();
            for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k)
                batch.push_back(train[order[k]]);
            std::fill(grad.begin(), grad.end(), 0.0);
            const double l = step(model, batch, step_index++, grad);
            if (!std::isfinite(l) || l > limit)
                throw Error(ErrorKind::Divergence, kModule,
                            "training loss " + std::to_string(l) + " exceeds 1e3 x initial " + std::to_string(initial));
            auto params = model.parameters();
            for (std::size_t k = 0; k < params.size(); ++k) params[k] -= cfg.learning_rate * grad[k];
            train_sum += l;
            ++batches;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_sum / static_cast<double>(batches);
        rec.val_recon_loss = mean_recon_loss(model, val, cfg.loss);
        if (val_adv) rec.val_adv_loss = val_adv(model, epoch);
        if (!std::isfinite(rec.val_recon_loss) || rec.val_recon_loss > limit)
            throw Error(ErrorKind::Divergence, kModule, "validation loss diverged at epoch " + std::to_string(epoch));
        result.history.push_back(rec);
        if (select_checkpoint(result.history) == epoch) {
            best_params.assign(model.parameters().begin(), model.parameters().end());
            result.best_epoch = static_cast<long>(epoch);
        }
    }
    std::copy(best_params.begin(), best_params.end(), model.parameters().begin());
    result.model = std::move(model);
    return result;
}

TrainResult train_standard(const ReconModel& init, std::span<const ReconExample> train,
                           std::span<const ReconExample> val, const TrainConfig& cfg) {
    return train_loop(init, train, val, cfg,
                      [&cfg](const ReconModel& m, std::span<const ReconExample> batch, std::size_t,
                             std::vector<double>& grad) {
                          auto lg = loss_and_grad(m, batch, cfg.loss);
                          grad = std::move(lg.grad);
                          return lg.loss;
                      });
}

std::string history_csv(const TrainHistory& history) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,train_loss,val_recon_loss,val_adv_loss\n";
    for (const auto& r : history) {
        out << r.epoch << "," << r.train_loss << "," << r.val_recon_loss << ",";
        if (std::isfinite(r.val_adv_loss)) out << r.val_adv_loss;
        out << "\n";
    }
    return out.str();
}

// Checkpoints ---------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ReconModel& model, const CheckpointMeta& meta) {
    nlohmann::ordered_json h;
    h["format"] = "CKPT v1";
    h["architecture"] = {{"channels", model.architecture().channels}, {"kernel", model.architecture().kernel}};
    h["seed"] = model.seed();
    h["epoch"] = meta.epoch;
    if (std::isfinite(meta.val_loss))
        h["val_loss"] = meta.val_loss;
    else
        h["val_loss"] = nullptr;
    h["mode"] = meta.mode;
    h["acceleration"] = meta.acceleration;
    h["loss"] = meta.loss;
    h["param_count"] = model.parameter_count();
    h["dtype"] = "f32";
    h["byte_order"] = "little";

    std::vector<float> payload(model.parameter_count());
    const auto params = model.parameters();
    std::transform(params.begin(), params.end(), payload.begin(), [](double v) { return static_cast<float>(v); });
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, kModule, "cannot write " + path.string());
    out << h.dump() << "\n";
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::Io, kModule, "write failed for " + path.string());
}

ReconModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, kModule, "cannot open " + path.string());
    std::string header_line;
    std::getline(in, header_line);
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header_line);
        if (h.at("format").get<std::string>() != "CKPT v1")
            throw Error(ErrorKind::Parse, kModule, "not a CKPT v1 file: " + path.string());
        Architecture arch;
        arch.channels = h.at("architecture").at("channels").get<std::vector<int>>();
        arch.kernel = h.at("architecture").at("kernel").get<int>();
        ReconModel model(arch, h.at("seed").get<std::uint64_t>());
        const auto count = h.at("param_count").get<std::size_t>();
        if (count != model.parameter_count())
            throw Error(ErrorKind::Parse, kModule, "parameter count does not match architecture");
        std::vector<float> payload(count);
        in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(count * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float)))
            throw Error(ErrorKind::Io, kModule, "truncated checkpoint " + path.string());
        std::copy(payload.begin(), payload.end(), model.parameters().begin());
        if (meta) {
            meta->mode = h.at("mode").get<std::string>();
            meta->epoch = h.at("epoch").get<long>();
            meta->val_loss = h.at("val_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                        : h.at("val_loss").get<double>();
            meta->acceleration = h.value("acceleration", 0);
            meta->loss = h.value("loss", std::string("l1"));
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, kModule, path.string() + ": " + e.what());
    }
}

} // namespace fnaf
