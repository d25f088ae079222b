#pragma once

namespace semrsa {

/// Caps the number of worker threads used by internal parallel loops.
/// Results never depend on this value.
void set_thread_count(int n);
int thread_count() noexcept;

/// Thread count from the SEMRSA_THREADS environment variable, or the
/// hardware concurrency when unset.
int default_thread_count();

}  // namespace semrsa
