#include "prodexp/parallel.hpp"

#include <omp.h>

namespace prodexp {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    return omp_get_max_threads();
}

}  // namespace prodexp
