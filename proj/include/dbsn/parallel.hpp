#pragma once

#include <functional>

namespace dbsn {

// Worker-thread cap from DBSN_THREADS (0 or unset = sequential deterministic
// mode). Read once per process.
int thread_budget();

// Runs fn(0..n-1). Results must be written to disjoint slots; callers reduce
// in index order afterwards, so outputs are identical regardless of the
// thread count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace dbsn
