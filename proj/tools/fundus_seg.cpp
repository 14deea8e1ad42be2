#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fundus/data.hpp"
#include "fundus/errors.hpp"
#include "fundus/pipeline.hpp"
#include "fundus/run_config.hpp"
#include "fundus/threading.hpp"
#include "fundus/train.hpp"

using namespace fundus;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::optional<std::uint64_t> seed;
    fs::path out;
    fs::path config;
    std::vector<std::string> settings;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--seed", c.seed, "random seed (overrides the config file)");
    cmd->add_option("--out", c.out, "output directory")->required();
    cmd->add_option("--config", c.config, "config file of `key = value` lines");
    cmd->add_option("--set", c.settings, "extra `key=value` override, repeatable");
    cmd->add_flag("--quiet", c.quiet, "suppress progress output");
}

void say(const Common& c, const std::string& line)
{
    if (!c.quiet) {
        std::cerr << line << '\n';
    }
}

// defaults < config file < flags
RunConfig resolve_config(const Common& c, Task task)
{
    RunConfig cfg = RunConfig::defaults_for(task);
    if (!c.config.empty()) {
        apply_config_file(cfg, c.config);
    }
    for (const auto& s : c.settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw UsageError("--set expects key=value, got '" + s + "'");
        }
        apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    cfg.train.task = task;
    if (c.seed) {
        cfg.train.seed = *c.seed;
    }
    cfg.validate();
    return cfg;
}

void echo_config(const RunConfig& cfg, const fs::path& out)
{
    fs::create_directories(out);
    std::ofstream f(out / "effective_config.conf", std::ios::trunc);
    f << serialize(cfg);
}

void write_json(const nlohmann::json& j, const fs::path& path)
{
    std::ofstream f(path, std::ios::trunc);
    f << j.dump(2) << '\n';
}

std::vector<std::string> ids_of(const std::vector<Sample>& samples)
{
    std::vector<std::string> ids;
    for (const auto& s : samples) {
        ids.push_back(s.id);
    }
    return ids;
}

void require_masks(const std::vector<Sample>& samples, Task task)
{
    for (const auto& s : samples) {
        if (!s.disc) {
            throw DataError("entry '" + s.id + "' has no disc mask");
        }
        if (task == Task::cup && !s.cup) {
            throw DataError("entry '" + s.id + "' has no cup mask, required for --task cup");
        }
    }
}

FoldSplit split_for(const Dataset& ds, const RunConfig& cfg)
{
    const auto ids = ids_of(ds.samples);
    if (ds.manifest.folds.empty()) {
        return kfold_split(ids, cfg.folds, cfg.train.seed);
    }
    FoldSplit split;
    split.k = cfg.folds;
    split.seed = cfg.train.seed;
    split.ids = ids;
    for (const auto& id : ids) {
        const auto it = ds.manifest.folds.find(id);
        if (it == ds.manifest.folds.end() || it->second < 0 || it->second >= cfg.folds) {
            throw DataError("folds.csv has no valid fold for entry '" + id + "'");
        }
        split.fold_of.push_back(it->second);
    }
    return split;
}

// Scores groundtruth against itself: exercises the harness without training.
class OracleStub : public MaskPredictor {
public:
    explicit OracleStub(Task task) : task_(task) {}
    [[nodiscard]] BinaryMask predict(const Sample& sample) const override { return truth_mask(sample, task_); }

private:
    Task task_;
};

// Network input sizes come from the weight files, the cup frame from the config.
PreprocessConfig inference_pre(const Common& c, const SegmentationModel* disc, const SegmentationModel* cup)
{
    PreprocessConfig pre = resolve_config(c, Task::disc).pre;
    if (disc != nullptr && disc->config().input_rows != pre.disc_resolution) {
        say(c, "note: disc_resolution taken from the weight file: " + std::to_string(disc->config().input_rows));
        pre.disc_resolution = disc->config().input_rows;
    }
    if (cup != nullptr && cup->config().input_rows != pre.cup_roi_resolution) {
        say(c, "note: cup_roi_resolution taken from the weight file: " + std::to_string(cup->config().input_rows));
        pre.cup_roi_resolution = cup->config().input_rows;
    }
    return pre;
}

std::vector<Sample> inputs(const fs::path& image, const fs::path& data)
{
    if (image.empty() == data.empty()) {
        throw UsageError("give exactly one of --image or --data");
    }
    if (!image.empty()) {
        Sample s;
        s.id = image.stem().string();
        s.image = read_image(image, s.id);
        return {s};
    }
    return load_dataset(data).samples;
}

int cmd_synth(const Common& c, int n, int size)
{
    if (n < 1) {
        throw UsageError("--n must be at least 1");
    }
    if (size < 16) {
        throw UsageError("--size must be at least 16");
    }
    const auto manifest = write_synthetic_dataset(synth_generate(n, c.seed.value_or(0), {size, size}), c.out);
    say(c, "wrote " + std::to_string(manifest.entries.size()) + " synthetic eyes to " + c.out.string());
    return kOk;
}

int cmd_train(const Common& c, Task task, const fs::path& data)
{
    const RunConfig cfg = resolve_config(c, task);
    echo_config(cfg, c.out);
    const auto ds = load_dataset(data);
    require_masks(ds.samples, task);
    const auto examples = stage_examples(ds.samples, task, cfg.pre);
    const TrainResult result = train_model(examples, cfg.train, cfg.model_for_task(), cfg.pre, [&](const EpochRecord& r) {
        say(c, to_json_line(r));
    });
    save_weights(result.model, c.out / (to_string(task) + ".bin"));
    write_history(result.history, c.out / "history.jsonl");
    std::ofstream split(c.out / "split.csv", std::ios::trunc);
    split << "id,role\n";
    for (const auto& id : result.train_ids) {
        split << id << ",train\n";
    }
    for (const auto& id : result.validation_ids) {
        split << id << ",validation\n";
    }
    const auto& best = result.history.epochs.at(result.history.best_epoch);
    say(c, "best epoch " + std::to_string(best.epoch) + ", validation soft-Dice " + std::to_string(best.val_soft_dice));
    return kOk;
}

int cmd_crossval(const Common& c, Task task, const fs::path& data, bool stub)
{
    const RunConfig cfg = resolve_config(c, task);
    echo_config(cfg, c.out);
    const auto ds = load_dataset(data);
    require_masks(ds.samples, task);
    if (static_cast<int>(ds.samples.size()) < cfg.folds) {
        throw DataError("dataset has " + std::to_string(ds.samples.size()) + " entries, fewer than " +
                        std::to_string(cfg.folds) + " folds");
    }
    const auto split = split_for(ds, cfg);
    std::map<std::string, int> folds;
    for (std::size_t i = 0; i < split.ids.size(); ++i) {
        folds[split.ids[i]] = split.fold_of[i];
    }
    write_folds(folds, c.out / "folds.csv");

    FoldTrainer trainer;
    if (stub) {
        trainer = [task](std::span<const Sample>, int) { return std::make_unique<OracleStub>(task); };
    } else {
        trainer = unet_fold_trainer(cfg.train, cfg.model_for_task(), cfg.pre, [&](int fold, const TrainResult& r) {
            const auto stem = "fold" + std::to_string(fold);
            write_history(r.history, c.out / (stem + "_history.jsonl"));
            save_weights(r.model, c.out / (stem + "_" + to_string(task) + ".bin"));
            say(c, stem + ": trained " + std::to_string(r.history.epochs.size()) + " epochs");
        });
    }
    const auto report = cross_validate(ds.samples, task, split, trainer);
    write_fold_scores(report, c.out / "fold_scores.csv");
    std::ofstream per_image(c.out / "per_image.csv", std::ios::trunc);
    per_image << "fold,id,iou,dice\n";
    for (std::size_t f = 0; f < report.folds.size(); ++f) {
        for (const auto& s : report.folds[f].per_image) {
            per_image << f << ',' << s.id << ',' << s.iou << ',' << s.dice << '\n';
        }
    }
    say(c, "mean IOU " + std::to_string(report.iou) + ", mean Dice " + std::to_string(report.dice));
    return kOk;
}

int cmd_predict(const Common& c, Task task, const fs::path& weights, const fs::path& disc_weights,
                const fs::path& image, const fs::path& data)
{
    auto model = std::make_shared<const SegmentationModel>(load_weights(weights));
    std::shared_ptr<const SegmentationModel> disc_model;
    if (!disc_weights.empty()) {
        disc_model = std::make_shared<const SegmentationModel>(load_weights(disc_weights));
    }
    if (task == Task::cup && !image.empty() && !disc_model) {
        throw UsageError("cup prediction on a bare image needs --disc-weights");
    }
    const auto pre = task == Task::disc ? inference_pre(c, model.get(), nullptr)
                                        : inference_pre(c, disc_model.get(), model.get());
    const auto samples = inputs(image, data);
    fs::create_directories(c.out / "masks");
    const UnetPredictor predictor(task, model, pre, disc_model);
    for (const auto& s : samples) {
        write_mask(predictor.predict(s), c.out / "masks" / (s.id + ".png"));
    }
    say(c, "wrote " + std::to_string(samples.size()) + " " + to_string(task) + " masks");
    return kOk;
}

int cmd_assess(const Common& c, const fs::path& disc_weights, const fs::path& cup_weights, const fs::path& image,
               const fs::path& data)
{
    const auto disc = load_weights(disc_weights);
    const auto cup = load_weights(cup_weights);
    const auto pre = inference_pre(c, &disc, &cup);
    const auto samples = inputs(image, data);
    fs::create_directories(c.out);
    std::ofstream summary;
    if (!data.empty()) {
        summary.open(c.out / "summary.csv", std::ios::trunc);
        summary << "id,status,cdr,glaucoma_suspicious,disc_area,cup_area,total_seconds\n";
    }
    int failures = 0;
    for (const auto& s : samples) {
        try {
            const auto r = assess(s.image, disc, cup, pre);
            write_json(to_json(r), c.out / (s.id + ".json"));
            write_image(render_overlay(s.image, r.disc, r.cup), c.out / (s.id + "_overlay.png"));
            if (summary.is_open()) {
                summary << s.id << ",ok," << r.cdr << ',' << (r.glaucoma_suspicious ? "true" : "false") << ','
                        << r.disc.count() << ',' << r.cup.count() << ',' << r.timings.total_seconds << '\n';
            }
            say(c, s.id + ": cdr " + std::to_string(r.cdr) + (r.glaucoma_suspicious ? " (suspicious)" : ""));
        } catch (const NoDiscFound& e) {
            ++failures;
            write_json(failure_json(s.id, e.what()), c.out / (s.id + ".json"));
            if (summary.is_open()) {
                summary << s.id << ",failed,,,,,\n";
            }
            say(c, s.id + ": " + e.what());
        }
    }
    if (image.empty()) {
        return kOk;
    }
    return failures == 0 ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Two-stage optic disc and cup segmentation"};
    app.require_subcommand(1);

    Common common;
    int n = 0;
    int size = 256;
    std::string task_name = "disc";
    fs::path data;
    fs::path image;
    fs::path weights;
    fs::path disc_weights;
    fs::path cup_weights;
    bool stub = false;

    auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
    add_common(synth, common);
    synth->add_option("--n", n, "number of eyes")->required();
    synth->add_option("--size", size, "image side in pixels");

    auto* train = app.add_subcommand("train", "train one network on a dataset");
    add_common(train, common);
    train->add_option("--task", task_name, "disc or cup")->required()->check(CLI::IsMember({"disc", "cup"}));
    train->add_option("--data", data, "manifest.csv")->required();

    auto* crossval = app.add_subcommand("crossval", "k-fold cross-validation");
    add_common(crossval, common);
    crossval->add_option("--task", task_name, "disc or cup")->required()->check(CLI::IsMember({"disc", "cup"}));
    crossval->add_option("--data", data, "manifest.csv")->required();
    crossval->add_flag("--stub-oracle", stub, "score groundtruth against itself instead of training");

    auto* predict = app.add_subcommand("predict", "write predicted masks");
    add_common(predict, common);
    predict->add_option("--task", task_name, "disc or cup")->required()->check(CLI::IsMember({"disc", "cup"}));
    predict->add_option("--weights", weights, "weight file for the task")->required();
    predict->add_option("--disc-weights", disc_weights, "disc weights; cup crops follow the predicted disc");
    predict->add_option("--image", image, "single image");
    predict->add_option("--data", data, "manifest.csv");

    auto* assess_cmd = app.add_subcommand("assess", "disc, cup, CDR and glaucoma flag per image");
    add_common(assess_cmd, common);
    assess_cmd->add_option("--disc-weights", disc_weights)->required();
    assess_cmd->add_option("--cup-weights", cup_weights)->required();
    assess_cmd->add_option("--image", image, "single image");
    assess_cmd->add_option("--data", data, "manifest.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        apply_thread_env();
        const Task task = parse_task(task_name);
        if (synth->parsed()) {
            return cmd_synth(common, n, size);
        }
        if (train->parsed()) {
            return cmd_train(common, task, data);
        }
        if (crossval->parsed()) {
            return cmd_crossval(common, task, data, stub);
        }
        if (predict->parsed()) {
            return cmd_predict(common, task, weights, disc_weights, image, data);
        }
        return cmd_assess(common, disc_weights, cup_weights, image, data);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}
