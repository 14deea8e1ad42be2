#include "fundus/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace fundus {

namespace {

std::string format_double(double v)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& value)
{
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw std::invalid_argument("config key '" + key + "': '" + value + "' is not a number");
    }
    return out;
}

long long parse_int(const std::string& key, const std::string& value)
{
    long long out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw std::invalid_argument("config key '" + key + "': '" + value + "' is not an integer");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1") {
        return true;
    }
    if (value == "false" || value == "0") {
        return false;
    }
    throw std::invalid_argument("config key '" + key + "': '" + value + "' is not a boolean");
}

struct Field {
    ConfigKey key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Member>
Field real(const char* name, const char* origin, Member member)
{
    return {{name, origin}, [member](const RunConfig& c) {
                RunConfig copy = c;
                return format_double(member(copy));
            },
            [member, name](RunConfig& c, const std::string& v) { member(c) = parse_double(name, v); }};
}

template <typename Member>
Field integer(const char* name, const char* origin, Member member)
{
    return {{name, origin}, [member](const RunConfig& c) {
                RunConfig copy = c;
                return std::to_string(member(copy));
            },
            [member, name](RunConfig& c, const std::string& v) {
                using T = std::remove_reference_t<decltype(member(c))>;
                member(c) = static_cast<T>(parse_int(name, v));
            }};
}

const std::vector<Field>& fields()
{
    static const std::vector<Field> table = [] {
        constexpr const char* ref = "reference setting";
        constexpr const char* proj = "project default";
        std::vector<Field> f;
        f.push_back({{"task", "command line"},
                     [](const RunConfig& c) { return to_string(c.train.task); },
                     [](RunConfig& c, const std::string& v) { c.train.task = parse_task(v); }});
        f.push_back(real("learning_rate", "reference setting (1e-3 disc, 3e-4 cup)",
                         [](RunConfig& c) -> double& { return c.train.learning_rate; }));
        f.push_back(real("momentum", ref, [](RunConfig& c) -> double& { return c.train.momentum; }));
        f.push_back(integer("batch_size", ref, [](RunConfig& c) -> int& { return c.train.batch_size; }));
        f.push_back(integer("max_epochs", "reference average epoch count",
                            [](RunConfig& c) -> int& { return c.train.max_epochs; }));
        f.push_back(integer("patience", proj, [](RunConfig& c) -> int& { return c.train.patience; }));
        f.push_back(real("validation_fraction", proj,
                         [](RunConfig& c) -> double& { return c.train.validation_fraction; }));
        f.push_back({{"augment", proj},
                     [](const RunConfig& c) { return std::string(c.train.augment ? "true" : "false"); },
                     [](RunConfig& c, const std::string& v) { c.train.augment = parse_bool("augment", v); }});
        f.push_back(real("rotation_deg", proj, [](RunConfig& c) -> double& { return c.train.augmentation.rotation_deg; }));
        f.push_back(real("zoom_min", proj, [](RunConfig& c) -> double& { return c.train.augmentation.zoom_min; }));
        f.push_back(real("zoom_max", proj, [](RunConfig& c) -> double& { return c.train.augmentation.zoom_max; }));
        f.push_back(real("shift_frac", proj, [](RunConfig& c) -> double& { return c.train.augmentation.shift_frac; }));
        f.push_back(real("hflip_prob", proj, [](RunConfig& c) -> double& { return c.train.augmentation.hflip_prob; }));
        f.push_back(real("vflip_prob", proj, [](RunConfig& c) -> double& { return c.train.augmentation.vflip_prob; }));
        f.push_back(real("box_jitter", proj, [](RunConfig& c) -> double& { return c.train.box_jitter; }));
        f.push_back(integer("seed", proj, [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));
        f.push_back(integer("filters", "sized to the reference parameter budget",
                            [](RunConfig& c) -> int& { return c.model.filters; }));
        f.push_back(integer("depth", proj, [](RunConfig& c) -> int& { return c.model.depth; }));
        f.push_back(real("dropout", proj, [](RunConfig& c) -> double& { return c.model.dropout; }));
        f.push_back(integer("kernel", ref, [](RunConfig& c) -> int& { return c.model.kernel; }));
        f.push_back(integer("disc_resolution", ref, [](RunConfig& c) -> int& { return c.pre.disc_resolution; }));
        f.push_back(integer("cup_frame_resolution", ref, [](RunConfig& c) -> int& { return c.pre.cup_frame_resolution; }));
        f.push_back(integer("cup_roi_resolution", ref, [](RunConfig& c) -> int& { return c.pre.cup_roi_resolution; }));
        f.push_back(real("margin_frac", proj, [](RunConfig& c) -> double& { return c.pre.margin_frac; }));
        f.push_back(real("clahe_clip_limit", proj, [](RunConfig& c) -> double& { return c.pre.clahe.clip_limit; }));
        f.push_back(integer("clahe_tile_rows", proj, [](RunConfig& c) -> int& { return c.pre.clahe.tile_rows; }));
        f.push_back(integer("clahe_tile_cols", proj, [](RunConfig& c) -> int& { return c.pre.clahe.tile_cols; }));
        f.push_back(integer("folds", ref, [](RunConfig& c) -> int& { return c.folds; }));
        return f;
    }();
    return table;
}

const Field& find_field(const std::string& key)
{
    for (const auto& f : fields()) {
        if (f.key.name == key) {
            return f;
        }
    }
    throw std::invalid_argument("unknown config key '" + key + "'");
}

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

RunConfig RunConfig::defaults_for(Task task)
{
    RunConfig cfg;
    cfg.train = TrainConfig::defaults_for(task);
    return cfg;
}

ModelConfig RunConfig::model_for_task() const
{
    ModelConfig m = model;
    const int side = train.task == Task::disc ? pre.disc_resolution : pre.cup_roi_resolution;
    m.input_rows = side;
    m.input_cols = side;
    return m;
}

void RunConfig::validate() const
{
    train.validate();
    model_for_task().validate();
    if (folds < 2) {
        throw std::invalid_argument("config: folds must be at least 2");
    }
    if (pre.disc_resolution < 1 || pre.cup_frame_resolution < 1 || pre.cup_roi_resolution < 1) {
        throw std::invalid_argument("config: resolutions must be positive");
    }
    if (!(pre.margin_frac >= 0.0)) {
        throw std::invalid_argument("config: margin_frac must be non-negative");
    }
}

const std::vector<ConfigKey>& config_keys()
{
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        for (const auto& f : fields()) {
            k.push_back(f.key);
        }
        return k;
    }();
    return keys;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value)
{
    find_field(key).set(cfg, trim(value));
}

std::string get_setting(const RunConfig& cfg, const std::string& key)
{
    return find_field(key).get(cfg);
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source)
{
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        try {
            apply_setting(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot open config file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    apply_config_text(cfg, buf.str(), path.string());
}

std::string serialize(const RunConfig& cfg)
{
    std::ostringstream out;
    out << "# effective configuration\n";
    for (const auto& f : fields()) {
        out << f.key.name << " = " << f.get(cfg) << "  # " << f.key.origin << '\n';
    }
    return out.str();
}

}  // namespace fundus
