#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <queue>

#include <opencv2/imgproc.hpp>

#include "fundus/preprocess.hpp"
#include "support.hpp"

using namespace fundus;
using fundus::testing::ellipse;
using fundus::testing::random_image;
using fundus::testing::rectangle;

namespace {

// Smooth image with a brightness ramp and blurred noise, closer to photographs than white noise.
FundusImage natural_image(std::mt19937_64& rng, int rows, int cols)
{
    cv::theRNG().state = rng();
    cv::Mat noise(rows, cols, CV_8UC3);
    cv::randu(noise, cv::Scalar::all(0), cv::Scalar::all(255));
    cv::Mat blurred;
    cv::GaussianBlur(noise, blurred, cv::Size(0, 0), 3.0);
    cv::Mat ramp(rows, cols, CV_8UC3);
    std::uniform_int_distribution<int> base(20, 120);
    const int b = base(rng);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int v = b + (c * 80) / cols;
            ramp.at<cv::Vec3b>(r, c) = cv::Vec3b(v, v / 2, v / 3);
        }
    }
    cv::Mat out;
    cv::addWeighted(ramp, 0.7, blurred, 0.5, 0, out);
    return {out, "natural"};
}

double mean_abs_diff(const FundusImage& a, const FundusImage& b)
{
    cv::Mat d;
    cv::absdiff(a.mat(), b.mat(), d);
    const cv::Scalar s = cv::mean(d);
    return (s[0] + s[1] + s[2]) / 3.0;
}

// Flood fill from every unvisited pixel; returns the box of the largest 4-connected blob.
BoundingBox flood_fill_box(const BinaryMask& m)
{
    std::vector<int> seen(static_cast<std::size_t>(m.rows()) * m.cols(), 0);
    BoundingBox best{};
    int best_size = 0;
    for (int r0 = 0; r0 < m.rows(); ++r0) {
        for (int c0 = 0; c0 < m.cols(); ++c0) {
            if (!m(r0, c0) || seen[r0 * m.cols() + c0]) {
                continue;
            }
            BoundingBox box{r0, r0, c0, c0};
            int size = 0;
            std::queue<std::pair<int, int>> q;
            q.emplace(r0, c0);
            seen[r0 * m.cols() + c0] = 1;
            while (!q.empty()) {
                auto [r, c] = q.front();
                q.pop();
                ++size;
                box = {std::min(box.row_min, r), std::max(box.row_max, r), std::min(box.col_min, c),
                       std::max(box.col_max, c)};
                const int dr[] = {-1, 1, 0, 0};
                const int dc[] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int nr = r + dr[k];
                    const int nc = c + dc[k];
                    if (nr >= 0 && nc >= 0 && nr < m.rows() && nc < m.cols() && m(nr, nc) && !seen[nr * m.cols() + nc]) {
                        seen[nr * m.cols() + nc] = 1;
                        q.emplace(nr, nc);
                    }
                }
            }
            if (size > best_size) {
                best_size = size;
                best = box;
            }
        }
    }
    return best;
}

}  // namespace

TEST_CASE("clahe on a constant image")
{
    const FundusImage flat(64, 64, cv::Scalar(120, 90, 60));
    const auto out = clahe(flat);
    cv::Mat ch[3];
    cv::split(out.mat(), ch);
    for (auto& c : ch) {
        double lo = 0;
        double hi = 0;
        cv::minMaxLoc(c, &lo, &hi);
        CHECK(hi - lo <= 1.0);
    }
    CHECK(mean_abs_diff(out, flat) <= 3.0);
}

TEST_CASE("clahe preserves shape and rejects degenerate input")
{
    std::mt19937_64 rng(1);
    for (auto [r, c] : std::vector<std::pair<int, int>>{{32, 32}, {40, 57}, {128, 96}}) {
        const auto img = random_image(rng, r, c);
        const auto out = clahe(img);
        CHECK(out.dims() == img.dims());
        CHECK(out.mat().type() == CV_8UC3);
    }
    CHECK_THROWS_AS(clahe(FundusImage(4, 20, cv::Scalar::all(5))), std::invalid_argument);
    CHECK_THROWS_AS(clahe(FundusImage(20, 20, cv::Scalar::all(5)), {0.0, 8, 8}), std::invalid_argument);
    CHECK_THROWS_AS(clahe(FundusImage(20, 20, cv::Scalar::all(5)), {2.0, 0, 8}), std::invalid_argument);
}

TEST_CASE("second clahe pass changes the image less than the first")
{
    std::mt19937_64 rng(7);
    for (int i = 0; i < 10; ++i) {
        const auto img = natural_image(rng, 96, 96);
        const auto once = clahe(img);
        const auto twice = clahe(once);
        CHECK(mean_abs_diff(once, twice) < mean_abs_diff(img, once));
    }
}

TEST_CASE("resize")
{
    std::mt19937_64 rng(3);
    const auto img = random_image(rng, 20, 30);
    CHECK(resize(img, img.dims()).identical(img));
    const auto m = fundus::testing::random_mask(rng, 9, 11);
    CHECK(resize(m, m.dims()) == m);

    const BinaryMask small(2, 2, {1, 0, 0, 1});
    const auto big = resize(small, {4, 4});
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            CHECK(big(r, c) == small(r / 2, c / 2));
        }
    }

    const FundusImage flat(40, 40, cv::Scalar(17, 200, 99));
    const auto down = resize(flat, {13, 7});
    CHECK(down.dims() == Dims{13, 7});
    CHECK(down.identical(FundusImage(13, 7, cv::Scalar(17, 200, 99))));

    CHECK_THROWS_AS(resize(small, {4, 4}, Interpolation::bilinear), std::invalid_argument);
    CHECK_THROWS_AS(resize(img, {0, 4}), std::invalid_argument);
}

TEST_CASE("resized masks stay binary")
{
    std::mt19937_64 rng(4);
    const auto m = fundus::testing::random_mask(rng, 17, 23);
    for (Dims d : {Dims{5, 5}, Dims{64, 31}, Dims{17, 100}}) {
        const auto out = resize(m, d);
        for (auto v : out.values()) {
            CHECK((v == 0 || v == 1));
        }
    }
}

TEST_CASE("extract_bbox documented cases")
{
    CHECK(extract_bbox(rectangle(12, 12, 3, 7, 2, 9)) == BoundingBox{3, 7, 2, 9});
    CHECK(extract_bbox(rectangle(10, 10, 4, 4, 4, 4)) == BoundingBox{4, 4, 4, 4});
    CHECK_THROWS_AS(extract_bbox(BinaryMask(10, 10)), NoDiscFound);

    // 10x5 block (50 px) and a separate 5x1 bar (5 px)
    BinaryMask two = rectangle(30, 30, 2, 11, 3, 7);
    for (int r = 20; r < 25; ++r) {
        two.set(r, 25, true);
    }
    REQUIRE(two.count() == 55);
    CHECK(extract_bbox(two) == BoundingBox{2, 11, 3, 7});
    CHECK(extract_bbox(two) == flood_fill_box(two));
}

TEST_CASE("extract_bbox agrees with a flood-fill oracle")
{
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> pos(0, 39);
    for (int i = 0; i < 50; ++i) {
        int r0 = pos(rng);
        int r1 = pos(rng);
        int c0 = pos(rng);
        int c1 = pos(rng);
        if (r0 > r1) {
            std::swap(r0, r1);
        }
        if (c0 > c1) {
            std::swap(c0, c1);
        }
        const auto rect = rectangle(40, 40, r0, r1, c0, c1);
        CHECK(extract_bbox(rect) == BoundingBox{r0, r1, c0, c1});
        const auto speckle = fundus::testing::random_mask(rng, 40, 40, 0.3);
        CHECK(extract_bbox(speckle) == flood_fill_box(speckle));
    }
}

TEST_CASE("drop_small_components")
{
    using fundus::testing::rectangle;
    // 10x10 = 100, 5x6 = 30, 2x2 = 4 (at sizes 100/30/4 a 10% cut falls at 10)
    BinaryMask m = rectangle(40, 40, 0, 9, 0, 9);
    const auto mid = rectangle(40, 40, 20, 24, 20, 25);
    const auto dot = rectangle(40, 40, 35, 36, 2, 3);
    for (int r = 0; r < 40; ++r) {
        for (int c = 0; c < 40; ++c) {
            m.set(r, c, m(r, c) || mid(r, c) || dot(r, c));
        }
    }
    const auto kept = drop_small_components(m, 0.1);
    CHECK(kept.count() == 130);
    CHECK_FALSE(kept(35, 2));
    CHECK(kept(22, 22));
    CHECK(drop_small_components(m, 1.0) == largest_component(m));
    CHECK(drop_small_components(m, 0.0) == m);
    CHECK(drop_small_components(BinaryMask(5, 5), 0.5) == BinaryMask(5, 5));
    // diagonal neighbours are separate components
    const BinaryMask diag(2, 2, {1, 0, 0, 1});
    CHECK(drop_small_components(diag, 1.0) == diag);
    CHECK_THROWS_AS(drop_small_components(m, 1.5), std::invalid_argument);
}

TEST_CASE("crop_with_margin")
{
    std::mt19937_64 rng(5);
    const auto img = random_image(rng, 100, 100);
    const BoundingBox box{40, 59, 40, 59};

    auto [exact, t0] = crop_with_margin(img, box, 0.0);
    CHECK(t0.region == box);
    CHECK(exact.dims() == Dims{20, 20});
    CHECK(exact.identical(FundusImage(img.mat()(cv::Rect(40, 40, 20, 20)))));

    auto [wide, t1] = crop_with_margin(img, box, 0.5);
    CHECK(t1.region == BoundingBox{30, 69, 30, 69});
    CHECK(wide.dims() == Dims{40, 40});

    CHECK_THROWS_AS(crop_with_margin(img, {90, 110, 0, 5}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(crop_with_margin(img, box, -0.1), std::invalid_argument);
}

TEST_CASE("crop_with_margin clamps at every edge")
{
    std::mt19937_64 rng(6);
    const auto img = random_image(rng, 50, 70);
    std::uniform_int_distribution<int> len(1, 30);
    std::uniform_real_distribution<double> margin(0.0, 1.5);
    for (int i = 0; i < 200; ++i) {
        const int h = len(rng);
        const int w = len(rng);
        BoundingBox b;
        switch (i % 4) {
        case 0: b = {0, h - 1, 10, 10 + w - 1}; break;
        case 1: b = {50 - h, 49, 10, 10 + w - 1}; break;
        case 2: b = {5, 5 + h - 1, 0, w - 1}; break;
        default: b = {5, 5 + h - 1, 70 - w, 69}; break;
        }
        auto [out, t] = crop_with_margin(img, b, margin(rng));
        CHECK(t.region.within(img.dims()));
        CHECK(out.dims() == Dims{t.region.height(), t.region.width()});
        CHECK(out.identical(FundusImage(img.mat()(cv::Rect(t.region.col_min, t.region.row_min, t.region.width(),
                                                          t.region.height())))));
    }
}

TEST_CASE("map_mask_back")
{
    std::mt19937_64 rng(8);
    const auto mask = fundus::testing::random_mask(rng, 30, 40);
    const CropTransform identity{{30, 40}, {0, 29, 0, 39}, {30, 40}, Interpolation::nearest};
    CHECK(map_mask_back(mask, identity) == mask);

    const CropTransform t{{100, 100}, {30, 69, 30, 69}, {64, 64}, Interpolation::bilinear};
    CHECK_FALSE(map_mask_back(BinaryMask(64, 64), t).any());
    CHECK_THROWS_AS(map_mask_back(BinaryMask(63, 64), t), std::invalid_argument);

    const auto back = map_mask_back(BinaryMask(64, 64, std::vector<std::uint8_t>(64 * 64, 1)), t);
    CHECK(back.count() == 40 * 40);
    CHECK(bounding_box(back) == t.region);
}

TEST_CASE("crop then map back reproduces interior ellipses")
{
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto img = random_image(rng, 128, 128);
    for (int i = 0; i < 30; ++i) {
        const double ry = 8 + 20 * u(rng);
        const double rx = 8 + 20 * u(rng);
        const auto m = ellipse(128, 128, 64 + 10 * (u(rng) - 0.5), 64 + 10 * (u(rng) - 0.5), ry, rx);
        const BoundingBox box = extract_bbox(m);
        auto [roi, t] = extract_roi(img, box, 0.2, {128, 128});
        CHECK(roi.dims() == Dims{128, 128});
        const auto local = resize(crop(m, t.region), t.output);
        const auto back = map_mask_back(local, t);
        CHECK(iou(back, m) >= 0.95);
    }
}

TEST_CASE("preprocess operations are deterministic")
{
    std::mt19937_64 rng(12);
    const auto img = natural_image(rng, 80, 90);
    CHECK(clahe(img).identical(clahe(img)));
    CHECK(resize(img, {33, 47}).identical(resize(img, {33, 47})));
    auto [a, ta] = extract_roi(img, {20, 40, 30, 60}, 0.2, {32, 32});
    auto [b, tb] = extract_roi(img, {20, 40, 30, 60}, 0.2, {32, 32});
    CHECK(a.identical(b));
    CHECK(ta.region == tb.region);
    const auto m = fundus::testing::random_mask(rng, 32, 32);
    CHECK(map_mask_back(m, ta) == map_mask_back(m, tb));
}

TEST_CASE("scale_box")
{
    CHECK(scale_box({10, 19, 4, 7}, {100, 50}, {200, 100}) == BoundingBox{20, 39, 8, 15});
    CHECK(scale_box({0, 99, 0, 49}, {100, 50}, {37, 11}) == BoundingBox{0, 36, 0, 10});
    const auto down = scale_box({10, 10, 10, 10}, {100, 100}, {25, 25});
    CHECK(down.within({25, 25}));
    CHECK(down.contains(2, 2));
    CHECK_THROWS_AS(scale_box({0, 100, 0, 5}, {100, 100}, {50, 50}), std::invalid_argument);
}

TEST_CASE("mask and mat conversion")
{
    std::mt19937_64 rng(13);
    const auto m = fundus::testing::random_mask(rng, 15, 9);
    CHECK(mat_to_mask(mask_to_mat(m)) == m);
}
