#pragma once

namespace fundus {

/// Caps BLAS and OpenCV worker threads. Bit-exact reproducibility holds with one thread.
void set_thread_count(int threads);

/// Applies FUNDUS_SEG_THREADS when set; returns the cap in effect (0 = library default).
int apply_thread_env();

}  // namespace fundus
