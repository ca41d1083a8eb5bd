#include "dmar/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace dmar::kernels {

namespace {

std::atomic<const Ops*>& active_slot() {
  static std::atomic<const Ops*> slot{avx2_supported() ? &avx2_ops() : &scalar_ops()};
  return slot;
}

}  // namespace

const Ops& ops() { return *active_slot().load(std::memory_order_relaxed); }

Backend active_backend() {
  return active_slot().load(std::memory_order_relaxed) == &scalar_ops() ? Backend::scalar
                                                                        : Backend::avx2;
}

void force_backend(Backend b) {
  if (b == Backend::avx2) {
    if (!avx2_supported()) throw std::runtime_error("avx2 backend not supported on this cpu");
    active_slot().store(&avx2_ops(), std::memory_order_relaxed);
  } else {
    active_slot().store(&scalar_ops(), std::memory_order_relaxed);
  }
}

}  // namespace dmar::kernels
