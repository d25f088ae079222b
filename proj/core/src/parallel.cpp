#include "semrsa/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace semrsa {

namespace {
int g_threads = 0;
}

void set_thread_count(int n) {
    g_threads = std::max(1, n);
#ifdef _OPENMP
    omp_set_num_threads(g_threads);
#endif
}

int thread_count() noexcept {
    if (g_threads > 0) return g_threads;
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

int default_thread_count() {
    if (const char* env = std::getenv("SEMRSA_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace semrsa
