#include "cslc/threading.hpp"

#include <atomic>

namespace cslc {

namespace {
std::atomic<int>& thread_count_slot() {
    static std::atomic<int> n{0};
    return n;
}
} // namespace

int default_thread_count() {
    int n = thread_count_slot().load();
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_default_thread_count(int n) { thread_count_slot().store(n); }

} // namespace cslc
