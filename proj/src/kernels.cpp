#include "sdiff/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sdiff::kernels {

Backend& backend() {
#ifdef _OPENMP
    static Backend b = Backend::openmp;
#else
    static Backend b = Backend::serial;
#endif
    return b;
}

bool openmp_available() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

#define SDIFF_DISPATCH_KERNEL(name, params, args)          \
    void name params {                                     \
        if (backend() == Backend::openmp)                  \
            par::name args;                                \
        else                                               \
            ref::name args;                                \
    }

SDIFF_KERNEL_LIST(SDIFF_DISPATCH_KERNEL)

#undef SDIFF_DISPATCH_KERNEL

}  // namespace sdiff::kernels
