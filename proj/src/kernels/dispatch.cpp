#include <atomic>
#include <cstdlib>
#include <string_view>

#include "polsens/kernels.hpp"

namespace polsens::kernels {

const KernelTable* avx2_table_if_compiled();

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* select_default() {
  const char* forced = std::getenv("POLSENS_KERNELS");
  if (forced != nullptr && std::string_view(forced) == "scalar") {
    return &scalar();
  }
  if (const KernelTable* t = avx2()) return t;
  return &scalar();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{select_default()};
  return current;
}

}  // namespace

const KernelTable* avx2() {
  static const KernelTable* table =
      cpu_has_avx2_fma() ? avx2_table_if_compiled() : nullptr;
  return table;
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(const KernelTable& table) {
  slot().store(&table, std::memory_order_release);
}

}  // namespace polsens::kernels
