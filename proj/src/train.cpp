#include "fundus/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "fundus/errors.hpp"

namespace fundus {

std::string to_string(Task task)
{
    return task == Task::disc ? "disc" : "cup";
}

Task parse_task(const std::string& name)
{
    if (name == "disc") {
        return Task::disc;
    }
    if (name == "cup") {
        return Task::cup;
    }
    throw std::invalid_argument("unknown task '" + name + "' (expected disc or cup)");
}

TrainConfig TrainConfig::defaults_for(Task task)
{
    TrainConfig cfg;
    cfg.task = task;
    cfg.learning_rate = task == Task::disc ? 1e-3 : 3e-4;
    return cfg;
}

void TrainConfig::validate() const
{
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("TrainConfig: learning rate must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw std::invalid_argument("TrainConfig: momentum must lie in [0,1)");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("TrainConfig: batch size must be at least 1");
    }
    if (max_epochs < 0 || patience < 1) {
        throw std::invalid_argument("TrainConfig: max epochs must be >= 0 and patience >= 1");
    }
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw std::invalid_argument("TrainConfig: validation fraction must lie in [0,1)");
    }
    if (!(box_jitter >= 0.0 && box_jitter < 0.5)) {
        throw std::invalid_argument("TrainConfig: box jitter must lie in [0,0.5)");
    }
    augmentation.validate();
}

std::string to_json_line(const EpochRecord& r)
{
    std::ostringstream out;
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "{\"epoch\":" << r.epoch << ",\"train_loss\":" << r.train_loss << ",\"val_loss\":" << r.val_loss
        << ",\"val_soft_dice\":" << r.val_soft_dice << "}";
    return out.str();
}

void write_history(const TrainHistory& history, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    for (const auto& r : history.epochs) {
        out << to_json_line(r) << '\n';
    }
}

std::vector<std::size_t> FoldSplit::members(int fold) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
        if (fold_of[i] == fold) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<int> FoldSplit::sizes() const
{
    std::vector<int> n(static_cast<std::size_t>(k), 0);
    for (int f : fold_of) {
        ++n[static_cast<std::size_t>(f)];
    }
    return n;
}

FoldSplit kfold_split(std::span<const std::string> ids, int k, std::uint64_t seed)
{
    if (k < 2) {
        throw std::invalid_argument("kfold_split: k must be at least 2");
    }
    if (ids.size() < static_cast<std::size_t>(k)) {
        throw std::invalid_argument("kfold_split: " + std::to_string(ids.size()) + " items cannot fill " +
                                    std::to_string(k) + " folds");
    }
    FoldSplit split;
    split.k = k;
    split.seed = seed;
    split.ids.assign(ids.begin(), ids.end());
    split.fold_of.assign(ids.size(), 0);
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        split.fold_of[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
    }
    return split;
}

void sgd_momentum_step(std::vector<ParameterArray>& params, const ParameterGradients& grads,
                       ParameterGradients& velocity, double lr, double momentum)
{
    if (grads.size() != params.size() || velocity.size() != params.size()) {
        throw std::invalid_argument("sgd_momentum_step: gradient/velocity count does not match parameters");
    }
    const float lrf = static_cast<float>(lr);
    const float mf = static_cast<float>(momentum);
    for (std::size_t a = 0; a < params.size(); ++a) {
        auto& w = params[a].values;
        const auto& g = grads[a];
        auto& v = velocity[a];
        if (g.size() != w.size() || v.size() != w.size()) {
            throw std::invalid_argument("sgd_momentum_step: shape mismatch for " + params[a].name);
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = mf * v[i] - lrf * g[i];
            w[i] += v[i];
        }
    }
}

const BinaryMask& truth_mask(const Sample& sample, Task task)
{
    const auto& m = task == Task::disc ? sample.disc : sample.cup;
    if (!m) {
        throw DataError("entry '" + sample.id + "' has no " + to_string(task) + " mask");
    }
    return *m;
}

std::vector<TrainingExample> stage_examples(std::span<const Sample> samples, Task task, const PreprocessConfig& pre)
{
    std::vector<TrainingExample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        if (task == Task::disc) {
            const Dims net{pre.disc_resolution, pre.disc_resolution};
            out.push_back({s.id, clahe(resize(s.image, net), pre.clahe), resize(truth_mask(s, Task::disc), net),
                           std::nullopt});
        } else {
            const Dims frame{pre.cup_frame_resolution, pre.cup_frame_resolution};
            const BinaryMask& disc = truth_mask(s, Task::disc);
            const BinaryMask& cup = truth_mask(s, Task::cup);
            BoundingBox box;
            try {
                box = extract_bbox(disc);
            } catch (const NoDiscFound&) {
                throw DataError("entry '" + s.id + "': empty disc mask, cannot crop the cup region");
            }
            out.push_back({s.id, resize(s.image, frame), resize(cup, frame), scale_box(box, s.image.dims(), frame)});
        }
    }
    return out;
}

namespace {

BoundingBox jitter_box(const BoundingBox& box, double jitter, Dims bounds, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    auto offset = [&](int side) { return static_cast<int>(std::lround(unit(rng) * jitter * side)); };
    BoundingBox b = box;
    b.row_min = std::clamp(box.row_min + offset(box.height()), 0, bounds.rows - 1);
    b.row_max = std::clamp(box.row_max + offset(box.height()), 0, bounds.rows - 1);
    b.col_min = std::clamp(box.col_min + offset(box.width()), 0, bounds.cols - 1);
    b.col_max = std::clamp(box.col_max + offset(box.width()), 0, bounds.cols - 1);
    if (b.row_max < b.row_min || b.col_max < b.col_min) {
        return box;
    }
    return b;
}

}  // namespace

NetworkExample materialize(const TrainingExample& ex, const TrainConfig& cfg, const PreprocessConfig& pre,
                           std::mt19937_64* rng)
{
    FundusImage image = ex.image;
    BinaryMask mask = ex.mask;
    if (ex.roi) {
        BoundingBox box = *ex.roi;
        if (rng != nullptr && cfg.box_jitter > 0.0) {
            box = jitter_box(box, cfg.box_jitter, ex.image.dims(), *rng);
        }
        const Dims roi_dims{pre.cup_roi_resolution, pre.cup_roi_resolution};
        auto [roi, t] = extract_roi(ex.image, box, pre.margin_frac, roi_dims);
        image = clahe(roi, pre.clahe);
        mask = resize(crop(ex.mask, t.region), roi_dims, Interpolation::nearest);
    }
    if (rng != nullptr && cfg.augment) {
        std::tie(image, mask) = augment(image, mask, *rng, cfg.augmentation);
    }
    return {to_network_input(image), std::move(mask)};
}

TrainResult train_model(std::span<const TrainingExample> examples, const TrainConfig& cfg,
                        const ModelConfig& model_cfg, const PreprocessConfig& pre, const EpochCallback& on_epoch)
{
    cfg.validate();
    model_cfg.validate();
    if (examples.empty()) {
        throw std::invalid_argument("train_model: no training examples");
    }
    std::mt19937_64 rng(cfg.seed);

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t val_count = static_cast<std::size_t>(std::floor(cfg.validation_fraction * examples.size()));
    val_count = std::min(val_count, examples.size() - 1);
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_count));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(val_count), order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());

    TrainResult result{SegmentationModel(model_cfg, rng()), {}, {}, {}};
    for (auto i : train_idx) {
        result.train_ids.push_back(examples[i].id);
    }
    for (auto i : val_idx) {
        result.validation_ids.push_back(examples[i].id);
    }
    if (cfg.max_epochs == 0) {
        return result;
    }

    SegmentationModel& model = result.model;
    std::vector<NetworkExample> validation;
    for (auto i : val_idx.empty() ? train_idx : val_idx) {
        validation.push_back(materialize(examples[i], cfg, pre, nullptr));
    }

    ParameterGradients velocity = model.zero_gradients();
    ParameterGradients batch = model.zero_gradients();
    std::vector<ParameterArray> best = model.parameters();
    double best_loss = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        double loss_sum = 0.0;
        int in_batch = 0;
        for (std::size_t n = 0; n < train_idx.size(); ++n) {
            const TrainingExample& ex = examples[train_idx[n]];
            const NetworkExample ne = materialize(ex, cfg, pre, &rng);
            const TrainingPass pass = model.forward_train(ne.input, rng);
            const double loss = log_dice_loss(pass.output(), ne.target);
            if (!std::isfinite(loss)) {
                throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " on '" + ex.id +
                                       "': loss is not finite");
            }
            loss_sum += loss;
            const ParameterGradients g = pass.backward(loss_gradient(pass.output(), ne.target));
            for (std::size_t a = 0; a < g.size(); ++a) {
                for (std::size_t i = 0; i < g[a].size(); ++i) {
                    batch[a][i] += g[a][i];
                }
            }
            ++in_batch;
            if (in_batch == cfg.batch_size || n + 1 == train_idx.size()) {
                if (in_batch > 1) {
                    const float inv = 1.0f / static_cast<float>(in_batch);
                    for (auto& arr : batch) {
                        for (float& v : arr) {
                            v *= inv;
                        }
                    }
                }
                sgd_momentum_step(model.mutable_parameters(), batch, velocity, cfg.learning_rate, cfg.momentum);
                for (auto& arr : batch) {
                    std::fill(arr.begin(), arr.end(), 0.0f);
                }
                in_batch = 0;
            }
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(train_idx.size());
        for (const auto& v : validation) {
            const ProbabilityMap p = model.predict(v.input);
            record.val_loss += log_dice_loss(p, v.target);
            record.val_soft_dice += soft_dice(p, v.target);
        }
        record.val_loss /= static_cast<double>(validation.size());
        record.val_soft_dice /= static_cast<double>(validation.size());
        if (!std::isfinite(record.val_loss)) {
            throw TrainingDiverged("validation loss is not finite at epoch " + std::to_string(epoch));
        }
        result.history.epochs.push_back(record);
        if (on_epoch) {
            on_epoch(record);
        }
        if (record.val_loss < best_loss) {
            best_loss = record.val_loss;
            best = model.parameters();
            result.history.best_epoch = epoch;
        } else if (epoch - result.history.best_epoch >= cfg.patience) {
            break;
        }
    }
    model.mutable_parameters() = std::move(best);
    return result;
}

CrossValidationReport aggregate_folds(std::vector<ScoreReport> folds)
{
    CrossValidationReport report;
    for (const auto& f : folds) {
        report.iou += f.iou;
        report.dice += f.dice;
    }
    if (!folds.empty()) {
        report.iou /= static_cast<double>(folds.size());
        report.dice /= static_cast<double>(folds.size());
    }
    report.folds = std::move(folds);
    return report;
}

CrossValidationReport cross_validate(std::span<const Sample> samples, Task task, const FoldSplit& split,
                                     const FoldTrainer& trainer)
{
    if (samples.size() < static_cast<std::size_t>(split.k)) {
        throw std::invalid_argument("cross_validate: need at least " + std::to_string(split.k) + " samples");
    }
    std::unordered_map<std::string, int> fold_of;
    for (std::size_t i = 0; i < split.ids.size(); ++i) {
        fold_of[split.ids[i]] = split.fold_of[i];
    }
    for (const auto& s : samples) {
        if (!fold_of.contains(s.id)) {
            throw std::invalid_argument("cross_validate: sample '" + s.id + "' has no fold assignment");
        }
    }
    std::vector<ScoreReport> folds;
    for (int f = 0; f < split.k; ++f) {
        std::vector<Sample> train_set;
        std::vector<const Sample*> held_out;
        for (const auto& s : samples) {
            if (fold_of[s.id] == f) {
                held_out.push_back(&s);
            } else {
                train_set.push_back(s);
            }
        }
        const auto predictor = trainer(train_set, f);
        std::vector<ImageScore> scores;
        for (const Sample* s : held_out) {
            scores.push_back(score_image(s->id, predictor->predict(*s), truth_mask(*s, task)));
        }
        folds.push_back(summarize(std::move(scores)));
    }
    return aggregate_folds(std::move(folds));
}

void write_fold_scores(const CrossValidationReport& report, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << std::fixed << std::setprecision(6);
    out << "fold,iou,dice\n";
    for (std::size_t f = 0; f < report.folds.size(); ++f) {
        out << f << ',' << report.folds[f].iou << ',' << report.folds[f].dice << '\n';
    }
    out << "mean," << report.iou << ',' << report.dice << '\n';
}

}  // namespace fundus
