#include "fishmerge/threads.hpp"

#include <cstdlib>
#include <string>
#include <thread>

namespace fishmerge {

int configured_threads() {
    const char* env = std::getenv("FISHMERGE_THREADS");
    if (env == nullptr) return 1;
    int n = 1;
    try {
        n = std::stoi(env);
    } catch (...) {
        return 1;
    }
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, std::min(n, hw > 0 ? hw : 1));
}

}  // namespace fishmerge
