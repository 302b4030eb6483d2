#include "hqlab/thread_pool.hpp"

#include <memory>
#include <stdexcept>

namespace hqlab {

namespace {
std::unique_ptr<ThreadPool> g_pool;
}

ThreadPool& global_pool() {
    if (!g_pool) g_pool = std::make_unique<ThreadPool>(1);
    return *g_pool;
}

void set_global_threads(int n) {
    if (n < 1) throw std::invalid_argument("thread count must be at least 1");
    g_pool = std::make_unique<ThreadPool>(n);
}

}  // namespace hqlab
