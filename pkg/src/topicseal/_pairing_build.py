"""cffi build script for the bundled BLS12-381 core.

Paths are relative to the project root; the build always runs from there.
"""
import os

from cffi import FFI

_NATIVE = os.path.join("src", "topicseal", "_native")

ffibuilder = FFI()

ffibuilder.cdef("""
int bls_init(void);

void bls_g1_gen(uint64_t *out);
void bls_g1_identity(uint64_t *out);
int bls_g1_is_identity(const uint64_t *a);
int bls_g1_eq(const uint64_t *a, const uint64_t *b);
void bls_g1_add(uint64_t *out, const uint64_t *a, const uint64_t *b);
void bls_g1_neg(uint64_t *out, const uint64_t *a);
void bls_g1_mul(uint64_t *out, const uint64_t *a, const uint8_t *sc, int slen);
int bls_g1_in_group(const uint64_t *a);
void bls_g1_to_bytes(uint8_t *out, const uint64_t *a);
int bls_g1_from_bytes(uint64_t *out, const uint8_t *in);

void bls_g2_gen(uint64_t *out);
void bls_g2_identity(uint64_t *out);
int bls_g2_is_identity(const uint64_t *a);
int bls_g2_eq(const uint64_t *a, const uint64_t *b);
void bls_g2_add(uint64_t *out, const uint64_t *a, const uint64_t *b);
void bls_g2_neg(uint64_t *out, const uint64_t *a);
void bls_g2_mul(uint64_t *out, const uint64_t *a, const uint8_t *sc, int slen);
int bls_g2_in_group(const uint64_t *a);
void bls_g2_to_bytes(uint8_t *out, const uint64_t *a);
int bls_g2_from_bytes(uint64_t *out, const uint8_t *in);

void bls_gt_one(uint64_t *out);
int bls_gt_is_one(const uint64_t *a);
int bls_gt_eq(const uint64_t *a, const uint64_t *b);
void bls_gt_mul(uint64_t *out, const uint64_t *a, const uint64_t *b);
void bls_gt_inv(uint64_t *out, const uint64_t *a);
void bls_gt_exp(uint64_t *out, const uint64_t *a, const uint8_t *sc, int slen);
void bls_gt_to_bytes(uint8_t *out, const uint64_t *a);
int bls_gt_from_bytes(uint64_t *out, const uint8_t *in);

void bls_pairing(uint64_t *out, const uint64_t *p, const uint64_t *q);

void bls_tst_fp_mul(uint8_t *out, const uint8_t *a, const uint8_t *b);
int bls_tst_fp_inv(uint8_t *out, const uint8_t *a);
int bls_tst_fp_sqrt(uint8_t *out, const uint8_t *a);
void bls_tst_fp2_mul(uint8_t *out, const uint8_t *a, const uint8_t *b);
int bls_tst_fp2_sqrt(uint8_t *out, const uint8_t *a);
void bls_tst_fp12_mul(uint8_t *out, const uint8_t *a, const uint8_t *b);
void bls_tst_fp12_sqr(uint8_t *out, const uint8_t *a);
void bls_tst_cyc_sqr(uint8_t *out, const uint8_t *a);
void bls_tst_frob(uint8_t *out, const uint8_t *a);
void bls_tst_miller(uint8_t *out, const uint64_t *p, const uint64_t *q);
""")

ffibuilder.set_source(
    "topicseal._pairing",
    '#include "bls381.h"',
    sources=[os.path.join(_NATIVE, "bls381.c")],
    include_dirs=[_NATIVE],
    extra_compile_args=["-O3", "-std=c11", "-fomit-frame-pointer"],
)

if __name__ == "__main__":
    ffibuilder.compile(verbose=True)
