#pragma once

#include <mutex>
#include <shared_mutex>

namespace notesearch {

// Reader/writer lock for use with std::shared_lock and std::unique_lock. A
// writer waiting for readers to drain holds the turnstile, so new readers
// queue behind it instead of starving it.
class WriterPreferringMutex {
 public:
  void lock() {
    std::lock_guard gate(turnstile_);
    mutex_.lock();
  }
  bool try_lock() {
    std::unique_lock gate(turnstile_, std::try_to_lock);
    return gate.owns_lock() && mutex_.try_lock();
  }
  void unlock() { mutex_.unlock(); }

  void lock_shared() {
    std::lock_guard gate(turnstile_);
    mutex_.lock_shared();
  }
  bool try_lock_shared() {
    std::unique_lock gate(turnstile_, std::try_to_lock);
    return gate.owns_lock() && mutex_.try_lock_shared();
  }
  void unlock_shared() { mutex_.unlock_shared(); }

 private:
  std::mutex turnstile_;
  std::shared_mutex mutex_;
};

}  // namespace notesearch
