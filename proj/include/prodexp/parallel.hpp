#pragma once

namespace prodexp {

// Number of worker threads for parallel loops; 0 keeps the runtime default.
int resolve_threads(int requested);

}  // namespace prodexp
