#include "qsw/kernels.hpp"

#include <cstdlib>
#include <string>

namespace qsw::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(QSW_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Table& select() {
    const auto tables = available();
    if (const char* forced = std::getenv("QSW_KERNELS")) {
        const std::string want(forced);
        for (const Table* t : tables) {
            if (want == t->name) return *t;
        }
    }
    // Widest supported variant wins.
    return *tables.back();
}

}  // namespace

std::vector<const Table*> available() {
    std::vector<const Table*> out{&scalar_table()};
#if defined(QSW_HAVE_AVX2_KERNELS)
    if (cpu_has_avx2()) out.push_back(&avx2_table());
#endif
#if defined(QSW_HAVE_NEON_KERNELS)
    out.push_back(&neon_table());
#endif
    return out;
}

const Table& active() {
    static const Table& chosen = select();
    return chosen;
}

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Neon: return "neon";
    }
    return "unknown";
}

}  // namespace qsw::kernels
