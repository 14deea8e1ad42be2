#include "fundus/tensor.hpp"

namespace fundus {

Tensor to_network_input(const FundusImage& img)
{
    Tensor t(3, img.rows(), img.cols());
    for (int y = 0; y < img.rows(); ++y) {
        const auto* row = img.mat().ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.cols(); ++x) {
            for (int c = 0; c < 3; ++c) {
                t.at(c, y, x) = static_cast<float>(row[x][c]) / 255.0f;
            }
        }
    }
    return t;
}

}  // namespace fundus
