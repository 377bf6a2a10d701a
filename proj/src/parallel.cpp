#include "lesionmap/parallel.hpp"

#include <cstdlib>
#include <string>

namespace lesionmap {

int default_thread_count() {
    if (const char* env = std::getenv("LESIONMAP_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace lesionmap
