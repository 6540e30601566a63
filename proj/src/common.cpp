#include "splatgrasp/common.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <mutex>

namespace splatgrasp {

namespace {
std::atomic<bool> g_warnings{true};
std::atomic<int> g_threads{1};
std::mutex g_warn_mutex;
}  // namespace

void throw_precondition(const std::string& what) { throw Error(ErrorKind::Precondition, what); }
void throw_numerical(const std::string& what) { throw Error(ErrorKind::Numerical, what); }
void throw_io(const std::string& what) { throw Error(ErrorKind::Io, what); }

void warn(const std::string& message) {
  if (!g_warnings.load()) return;
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  std::cerr << "[splatgrasp] warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }

void set_thread_count(int threads) { g_threads.store(std::max(1, threads)); }
int thread_count() { return g_threads.load(); }

}  // namespace splatgrasp
