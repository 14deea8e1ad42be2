#include "fundus/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fundus/errors.hpp"

namespace fs = std::filesystem;

namespace fundus {

namespace {

constexpr const char* kManifestHeader = "id,image,disc,cup";

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

std::string strip(std::string s)
{
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ')) {
        s.pop_back();
    }
    std::size_t i = 0;
    while (i < s.size() && s[i] == ' ') {
        ++i;
    }
    return s.substr(i);
}

std::ifstream open_text(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return in;
}

}  // namespace

FundusImage read_image(const fs::path& path, std::string source_id)
{
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw DataError("cannot decode image " + path.string());
    }
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    return {rgb, std::move(source_id)};
}

void write_image(const FundusImage& img, const fs::path& path)
{
    cv::Mat bgr;
    cv::cvtColor(img.mat(), bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), bgr)) {
        throw std::runtime_error("cannot write image " + path.string());
    }
}

BinaryMask read_mask(const fs::path& path)
{
    cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (gray.empty()) {
        throw DataError("cannot decode mask " + path.string());
    }
    return mat_to_mask(gray);
}

void write_mask(const BinaryMask& mask, const fs::path& path)
{
    if (!cv::imwrite(path.string(), mask_to_mat(mask))) {
        throw std::runtime_error("cannot write mask " + path.string());
    }
}

DatasetManifest read_manifest(const fs::path& manifest_csv)
{
    auto in = open_text(manifest_csv);
    DatasetManifest manifest;
    manifest.root = manifest_csv.parent_path();
    manifest.name = manifest.root.filename().string();
    std::string line;
    if (!std::getline(in, line) || strip(line) != kManifestHeader) {
        throw DataError(manifest_csv.string() + ": expected header '" + std::string(kManifestHeader) + "'");
    }
    int line_no = 1;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip(line);
        if (line.empty()) {
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != 4) {
            throw DataError(manifest_csv.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
        }
        for (auto& f : fields) {
            f = strip(f);
        }
        if (fields[0].empty() || fields[1].empty()) {
            throw DataError(manifest_csv.string() + ":" + std::to_string(line_no) + ": id and image are required");
        }
        if (!seen.insert(fields[0]).second) {
            throw DataError(manifest_csv.string() + ": duplicate id '" + fields[0] + "'");
        }
        ManifestEntry e{fields[0], fields[1], std::nullopt, std::nullopt};
        if (!fields[2].empty()) {
            e.disc = fields[2];
        }
        if (!fields[3].empty()) {
            e.cup = fields[3];
        }
        manifest.entries.push_back(std::move(e));
    }
    const fs::path folds_csv = manifest.root / "folds.csv";
    if (fs::exists(folds_csv)) {
        manifest.folds = read_folds(folds_csv);
    }
    return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& manifest_csv)
{
    std::ofstream out(manifest_csv, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + manifest_csv.string());
    }
    out << kManifestHeader << '\n';
    for (const auto& e : manifest.entries) {
        out << e.id << ',' << e.image.generic_string() << ',' << (e.disc ? e.disc->generic_string() : "") << ','
            << (e.cup ? e.cup->generic_string() : "") << '\n';
    }
    if (!manifest.folds.empty()) {
        write_folds(manifest.folds, manifest_csv.parent_path() / "folds.csv");
    }
}

Dataset load_dataset(const fs::path& manifest_csv)
{
    Dataset ds;
    ds.manifest = read_manifest(manifest_csv);
    const fs::path& root = ds.manifest.root;
    for (const auto& e : ds.manifest.entries) {
        auto locate = [&](const fs::path& rel, const char* what) {
            const fs::path p = rel.is_absolute() ? rel : root / rel;
            if (!fs::exists(p)) {
                throw DataError("entry '" + e.id + "': " + what + " file " + p.string() + " does not exist");
            }
            return p;
        };
        Sample s;
        s.id = e.id;
        try {
            s.image = read_image(locate(e.image, "image"), e.id);
            if (e.disc) {
                s.disc = read_mask(locate(*e.disc, "disc mask"));
            }
            if (e.cup) {
                s.cup = read_mask(locate(*e.cup, "cup mask"));
            }
        } catch (const DataError& err) {
            const std::string msg = err.what();
            throw DataError(msg.rfind("entry '", 0) == 0 ? msg : "entry '" + e.id + "': " + msg);
        }
        for (const auto* m : {&s.disc, &s.cup}) {
            if (*m && (*m)->dims() != s.image.dims()) {
                throw DataError("entry '" + e.id + "': mask is " + to_string((*m)->dims()) + " but image is " +
                                to_string(s.image.dims()));
            }
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::map<std::string, int> read_folds(const fs::path& folds_csv)
{
    auto in = open_text(folds_csv);
    std::map<std::string, int> folds;
    std::string line;
    if (!std::getline(in, line) || strip(line) != "id,fold") {
        throw DataError(folds_csv.string() + ": expected header 'id,fold'");
    }
    while (std::getline(in, line)) {
        line = strip(line);
        if (line.empty()) {
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != 2) {
            throw DataError(folds_csv.string() + ": malformed line '" + line + "'");
        }
        try {
            folds[strip(fields[0])] = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw DataError(folds_csv.string() + ": bad fold index in '" + line + "'");
        }
    }
    return folds;
}

void write_folds(const std::map<std::string, int>& folds, const fs::path& folds_csv)
{
    std::ofstream out(folds_csv, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + folds_csv.string());
    }
    out << "id,fold\n";
    for (const auto& [id, fold] : folds) {
        out << id << ',' << fold << '\n';
    }
}

namespace {

BinaryMask ellipse_mask(Dims dims, double cy, double cx, double ry, double rx)
{
    BinaryMask m(dims.rows, dims.cols);
    for (int r = 0; r < dims.rows; ++r) {
        for (int c = 0; c < dims.cols; ++c) {
            const double dy = (r - cy) / ry;
            const double dx = (c - cx) / rx;
            m.set(r, c, dx * dx + dy * dy <= 1.0);
        }
    }
    return m;
}

BinaryMask intersect(const BinaryMask& a, const BinaryMask& b)
{
    BinaryMask out(a.rows(), a.cols());
    for (int r = 0; r < a.rows(); ++r) {
        for (int c = 0; c < a.cols(); ++c) {
            out.set(r, c, a(r, c) && b(r, c));
        }
    }
    return out;
}

SyntheticEye make_eye(std::mt19937_64& rng, Dims dims, const SynthOptions& options, const std::string& id)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto span = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    const double side = std::min(dims.rows, dims.cols);

    // Fundus field and optic-nerve-head geometry.
    const double field_r = 0.47 * side;
    const double field_cy = (dims.rows - 1) / 2.0;
    const double field_cx = (dims.cols - 1) / 2.0;
    const double disc_ry = span(0.11, 0.16) * side;
    const double disc_rx = disc_ry * span(0.85, 1.05);
    const double disc_cy = field_cy + span(-0.12, 0.12) * side;
    const double disc_cx = field_cx + span(-0.16, 0.16) * side;
    const double ratio = span(options.cup_ratio_min, options.cup_ratio_max);
    const double cup_ry = ratio * disc_ry;
    const double cup_rx = std::min(cup_ry * span(0.85, 1.1), 0.95 * disc_rx);
    const double slack = std::max(0.0, disc_ry - cup_ry);
    const double cup_cy = disc_cy + span(-0.25, 0.25) * slack;
    const double cup_cx = disc_cx + span(-0.25, 0.25) * std::max(0.0, disc_rx - cup_rx);

    BinaryMask disc = ellipse_mask(dims, disc_cy, disc_cx, disc_ry, disc_rx);
    BinaryMask cup = intersect(ellipse_mask(dims, cup_cy, cup_cx, cup_ry, cup_rx), disc);

    const cv::Vec3d retina(span(140, 175), span(55, 80), span(20, 40));
    const cv::Vec3d rim(span(215, 240), span(150, 180), span(80, 110));
    const cv::Vec3d pallor(span(245, 255), span(220, 240), span(170, 200));

    cv::Mat canvas(dims.rows, dims.cols, CV_8UC3, cv::Scalar::all(0));
    for (int r = 0; r < dims.rows; ++r) {
        auto* row = canvas.ptr<cv::Vec3b>(r);
        for (int c = 0; c < dims.cols; ++c) {
            const double fr = std::hypot(r - field_cy, c - field_cx) / field_r;
            if (fr > 1.0) {
                continue;
            }
            cv::Vec3d colour = retina * (1.0 - 0.35 * fr * fr);
            if (disc(r, c)) {
                colour = rim;
            }
            if (cup(r, c)) {
                colour = pallor;
            }
            for (int k = 0; k < 3; ++k) {
                row[c][k] = cv::saturate_cast<std::uint8_t>(colour[k]);
            }
        }
    }

    // Vessel-like streaks radiating from the disc.
    const int vessels = 4 + static_cast<int>(unit(rng) * 4);
    for (int v = 0; v < vessels; ++v) {
        double angle = span(0.0, 2.0 * M_PI);
        double y = disc_cy;
        double x = disc_cx;
        const double step = side * 0.03;
        std::vector<cv::Point> pts;
        pts.emplace_back(static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)));
        for (int s = 0; s < 16; ++s) {
            angle += span(-0.25, 0.25);
            y += step * std::sin(angle);
            x += step * std::cos(angle);
            pts.emplace_back(static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)));
        }
        const int thickness = std::max(1, static_cast<int>(std::lround(side * span(0.006, 0.014))));
        cv::polylines(canvas, pts, false, cv::Scalar(span(90, 120), span(15, 30), span(10, 25)), thickness,
                      cv::LINE_8);
    }
    cv::GaussianBlur(canvas, canvas, cv::Size(3, 3), 0.8);

    std::normal_distribution<double> noise(0.0, 4.0);
    for (int r = 0; r < dims.rows; ++r) {
        auto* row = canvas.ptr<cv::Vec3b>(r);
        for (int c = 0; c < dims.cols; ++c) {
            for (int k = 0; k < 3; ++k) {
                row[c][k] = cv::saturate_cast<std::uint8_t>(row[c][k] + noise(rng));
            }
        }
    }

    SyntheticEye eye;
    eye.true_cdr = cdr(disc, cup);
    eye.sample = Sample{id, FundusImage(canvas, id), std::move(disc), std::move(cup)};
    return eye;
}

}  // namespace

std::vector<SyntheticEye> synth_generate(int n, std::uint64_t seed, Dims dims, const SynthOptions& options)
{
    if (n < 1) {
        throw std::invalid_argument("synth_generate: count must be at least 1");
    }
    if (dims.rows < 16 || dims.cols < 16) {
        throw std::invalid_argument("synth_generate: images must be at least 16x16");
    }
    if (!(options.cup_ratio_min > 0.0 && options.cup_ratio_min <= options.cup_ratio_max && options.cup_ratio_max <= 1.0)) {
        throw std::invalid_argument("synth_generate: cup ratio range must satisfy 0 < min <= max <= 1");
    }
    std::mt19937_64 rng(seed);
    std::vector<SyntheticEye> eyes;
    eyes.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::ostringstream id;
        id << "synth" << std::setw(4) << std::setfill('0') << i;
        eyes.push_back(make_eye(rng, dims, options, id.str()));
    }
    return eyes;
}

DatasetManifest write_synthetic_dataset(const std::vector<SyntheticEye>& eyes, const fs::path& root,
                                        const std::string& name)
{
    for (const char* sub : {"images", "disc", "cup"}) {
        fs::create_directories(root / sub);
    }
    DatasetManifest manifest;
    manifest.name = name;
    manifest.root = root;
    std::ofstream truth(root / "truth.csv", std::ios::trunc);
    truth << "id,cdr\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& eye : eyes) {
        const auto& s = eye.sample;
        ManifestEntry e{s.id, fs::path("images") / (s.id + ".png"), fs::path("disc") / (s.id + ".png"),
                        fs::path("cup") / (s.id + ".png")};
        write_image(s.image, root / e.image);
        write_mask(*s.disc, root / *e.disc);
        write_mask(*s.cup, root / *e.cup);
        truth << s.id << ',' << eye.true_cdr << '\n';
        manifest.entries.push_back(std::move(e));
    }
    write_manifest(manifest, root / "manifest.csv");
    return manifest;
}

std::map<std::string, double> read_truth(const fs::path& truth_csv)
{
    auto in = open_text(truth_csv);
    std::map<std::string, double> truth;
    std::string line;
    if (!std::getline(in, line) || strip(line) != "id,cdr") {
        throw DataError(truth_csv.string() + ": expected header 'id,cdr'");
    }
    while (std::getline(in, line)) {
        line = strip(line);
        if (line.empty()) {
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != 2) {
            throw DataError(truth_csv.string() + ": malformed line '" + line + "'");
        }
        truth[fields[0]] = std::stod(fields[1]);
    }
    return truth;
}

}  // namespace fundus
