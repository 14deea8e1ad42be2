#include "fundus/threading.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

#include <cblas.h>
#include <opencv2/core.hpp>

namespace fundus {

void set_thread_count(int threads)
{
    if (threads < 1) {
        throw std::invalid_argument("thread count must be at least 1");
    }
    openblas_set_num_threads(threads);
    cv::setNumThreads(threads == 1 ? 0 : threads);
}

int apply_thread_env()
{
    const char* value = std::getenv("FUNDUS_SEG_THREADS");
    if (value == nullptr || *value == '\0') {
        return 0;
    }
    int threads = 0;
    try {
        threads = std::stoi(value);
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("FUNDUS_SEG_THREADS must be a positive integer, got '") + value + "'");
    }
    set_thread_count(threads);
    return threads;
}

}  // namespace fundus
