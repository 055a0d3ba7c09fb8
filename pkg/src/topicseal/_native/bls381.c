/* Self-contained BLS12-381 arithmetic: base field in 6x64 Montgomery form,
 * quadratic/sextic/dodecic tower, both source groups in Jacobian coordinates,
 * optimal ate pairing with a projective Miller loop.
 *
 * Conventions:
 *   - fp values are always fully reduced and in Montgomery form internally.
 *   - G1/G2 buffers hold Jacobian (X, Y, Z) limbs; Z == 0 encodes identity.
 *   - GT buffers hold 12 fp limb blocks nested as c[w][v][u].
 *   - The pairing returns the reduced optimal-ate value cubed (the final
 *     exponentiation uses the 3*(p^4-p^2+1)/r decomposition); this is still
 *     bilinear and non-degenerate, which is all callers rely on.
 *   - Nothing here is constant-time.
 */
#include <stdint.h>
#include <string.h>

typedef unsigned __int128 u128;
typedef uint64_t fp_t[6];

typedef struct { fp_t c0, c1; } fp2_t;
typedef struct { fp2_t c[3]; } fp6_t;
typedef struct { fp6_t c[2]; } fp12_t;

typedef struct { fp_t x, y, z; } g1p_t;     /* Jacobian */
typedef struct { fp2_t x, y, z; } g2p_t;    /* Jacobian */

static const uint64_t P_LIMBS[6] = {0xb9feffffffffaaabULL, 0x1eabfffeb153ffffULL, 0x6730d2a0f6b0f624ULL, 0x64774b84f38512bfULL, 0x4b1ba7b6434bacd7ULL, 0x1a0111ea397fe69aULL};
static const uint64_t PINV = 0x89f3fffcfffcfffdULL;
static const uint64_t R2_LIMBS[6] = {0xf4df1f341c341746ULL, 0x0a76e6a609d104f1ULL, 0x8de5476c4c95b6d5ULL, 0x67eb88a9939d83c0ULL, 0x9a793e85b519952dULL, 0x11988fe592cae3aaULL};
static const uint64_t P_MINUS_2[6] = {0xb9feffffffffaaa9ULL, 0x1eabfffeb153ffffULL, 0x6730d2a0f6b0f624ULL, 0x64774b84f38512bfULL, 0x4b1ba7b6434bacd7ULL, 0x1a0111ea397fe69aULL};
static const uint64_t SQRT_EXP[6] = {0xee7fbfffffffeaabULL, 0x07aaffffac54ffffULL, 0xd9cc34a83dac3d89ULL, 0xd91dd2e13ce144afULL, 0x92c6e9ed90d2eb35ULL, 0x0680447a8e5ff9a6ULL};
static const uint64_t FP2_SQRT_EXP1[6] = {0xee7fbfffffffeaaaULL, 0x07aaffffac54ffffULL, 0xd9cc34a83dac3d89ULL, 0xd91dd2e13ce144afULL, 0x92c6e9ed90d2eb35ULL, 0x0680447a8e5ff9a6ULL};
static const uint64_t P_MINUS_1_DIV_2[6] = {0xdcff7fffffffd555ULL, 0x0f55ffff58a9ffffULL, 0xb39869507b587b12ULL, 0xb23ba5c279c2895fULL, 0x258dd3db21a5d66bULL, 0x0d0088f51cbff34dULL};
static const uint64_t FROB_EXP[6] = {0x49aa7ffffffff1c7ULL, 0x051caaaa72e35555ULL, 0xe688231ad3c82906ULL, 0xe613e1eb7deb831fULL, 0x0c849bf3b5e1f223ULL, 0x045582fc5eeaa66fULL};
static const uint64_t G1X_RAW[6] = {0xfb3af00adb22c6bbULL, 0x6c55e83ff97a1aefULL, 0xa14e3a3f171bac58ULL, 0xc3688c4f9774b905ULL, 0x2695638c4fa9ac0fULL, 0x17f1d3a73197d794ULL};
static const uint64_t G1Y_RAW[6] = {0x0caa232946c5e7e1ULL, 0xd03cc744a2888ae4ULL, 0x00db18cb2c04b3edULL, 0xfcf5e095d5d00af6ULL, 0xa09e30ed741d8ae4ULL, 0x08b3f481e3aaa0f1ULL};
static const uint64_t G2X0_RAW[6] = {0xd48056c8c121bdb8ULL, 0x0bac0326a805bbefULL, 0xb4510b647ae3d177ULL, 0xc6e47ad4fa403b02ULL, 0x260805272dc51051ULL, 0x024aa2b2f08f0a91ULL};
static const uint64_t G2X1_RAW[6] = {0xe5ac7d055d042b7eULL, 0x334cf11213945d57ULL, 0xb5da61bbdc7f5049ULL, 0x596bd0d09920b61aULL, 0x7dacd3a088274f65ULL, 0x13e02b6052719f60ULL};
static const uint64_t G2Y0_RAW[6] = {0xe193548608b82801ULL, 0x923ac9cc3baca289ULL, 0x6d429a695160d12cULL, 0xadfd9baa8cbdd3a7ULL, 0x8cc9cdc6da2e351aULL, 0x0ce5d527727d6e11ULL};
static const uint64_t G2Y1_RAW[6] = {0xaaa9075ff05f79beULL, 0x3f370d275cec1da1ULL, 0x267492ab572e99abULL, 0xcb3e287e85a763afULL, 0x32acd2b02bc28b99ULL, 0x0606c4a02ea734ccULL};

/* |x| for the BLS parameter x = -0xd201000000010000 */
static const uint64_t X_MAG = 0xd201000000010000ULL;
static const uint64_t X_MINUS_1_MAG = 0xd201000000010001ULL;  /* |x - 1| */

static const uint8_t R_BYTES[32] = {
    0x73, 0xed, 0xa7, 0x53, 0x29, 0x9d, 0x7d, 0x48,
    0x33, 0x39, 0xd8, 0x08, 0x09, 0xa1, 0xd8, 0x05,
    0x53, 0xbd, 0xa4, 0x02, 0xff, 0xfe, 0x5b, 0xfe,
    0xff, 0xff, 0xff, 0xff, 0x00, 0x00, 0x00, 0x01,
};

/* filled in by bls_init() */
static fp_t FP_ONE;                 /* R mod p */
static fp_t FP_FOUR;                /* curve coefficient b = 4 */
static fp2_t FP2_B;                 /* twisted coefficient 4*(1+u) */
static fp2_t FROB_GAMMA[6];         /* (1+u)^(k*(p-1)/6), k = 0..5 */
static g1p_t G1_GEN;
static g2p_t G2_GEN;

/* ------------------------------------------------------------------ */
/* fp                                                                  */

static inline uint64_t adc(uint64_t a, uint64_t b, uint64_t *carry) {
    u128 s = (u128)a + b + *carry;
    *carry = (uint64_t)(s >> 64);
    return (uint64_t)s;
}

static inline uint64_t sbb(uint64_t a, uint64_t b, uint64_t *borrow) {
    u128 d = (u128)a - b - *borrow;
    *borrow = (uint64_t)((d >> 64) & 1);
    return (uint64_t)d;
}

static int fp_cmp(const fp_t a, const fp_t b) {
    for (int i = 5; i >= 0; i--) {
        if (a[i] < b[i]) return -1;
        if (a[i] > b[i]) return 1;
    }
    return 0;
}

static int fp_is_zero(const fp_t a) {
    uint64_t acc = 0;
    for (int i = 0; i < 6; i++) acc |= a[i];
    return acc == 0;
}

static void fp_copy(fp_t out, const fp_t a) { memcpy(out, a, sizeof(fp_t)); }
static void fp_zero(fp_t out) { memset(out, 0, sizeof(fp_t)); }

static void fp_reduce_once(fp_t a) {
    if (fp_cmp(a, P_LIMBS) >= 0) {
        uint64_t borrow = 0;
        for (int i = 0; i < 6; i++) a[i] = sbb(a[i], P_LIMBS[i], &borrow);
    }
}

static void fp_add(fp_t out, const fp_t a, const fp_t b) {
    uint64_t carry = 0;
    for (int i = 0; i < 6; i++) out[i] = adc(a[i], b[i], &carry);
    fp_reduce_once(out);
}

static void fp_sub(fp_t out, const fp_t a, const fp_t b) {
    uint64_t borrow = 0;
    for (int i = 0; i < 6; i++) out[i] = sbb(a[i], b[i], &borrow);
    if (borrow) {
        uint64_t carry = 0;
        for (int i = 0; i < 6; i++) out[i] = adc(out[i], P_LIMBS[i], &carry);
    }
}

static void fp_neg(fp_t out, const fp_t a) {
    if (fp_is_zero(a)) { fp_zero(out); return; }
    uint64_t borrow = 0;
    for (int i = 0; i < 6; i++) out[i] = sbb(P_LIMBS[i], a[i], &borrow);
}

static void fp_dbl(fp_t out, const fp_t a) { fp_add(out, a, a); }

/* CIOS Montgomery multiplication */
static void fp_mul(fp_t out, const fp_t a, const fp_t b) {
    uint64_t t[7] = {0, 0, 0, 0, 0, 0, 0};
    for (int i = 0; i < 6; i++) {
        uint64_t carry = 0;
        for (int j = 0; j < 6; j++) {
            u128 s = (u128)a[j] * b[i] + t[j] + carry;
            t[j] = (uint64_t)s;
            carry = (uint64_t)(s >> 64);
        }
        uint64_t t6 = t[6] + carry;   /* cannot overflow: t stays < 2p */

        uint64_t m = t[0] * PINV;
        u128 s = (u128)m * P_LIMBS[0] + t[0];
        carry = (uint64_t)(s >> 64);
        for (int j = 1; j < 6; j++) {
            s = (u128)m * P_LIMBS[j] + t[j] + carry;
            t[j - 1] = (uint64_t)s;
            carry = (uint64_t)(s >> 64);
        }
        t[5] = t6 + carry;            /* likewise cannot overflow */
        t[6] = 0;
    }
    memcpy(out, t, sizeof(fp_t));
    fp_reduce_once(out);
}

static void fp_sqr(fp_t out, const fp_t a) { fp_mul(out, a, a); }

static void fp_pow(fp_t out, const fp_t base, const uint64_t *exp, int nlimbs) {
    fp_t acc, b;
    fp_copy(acc, FP_ONE);
    fp_copy(b, base);
    int started = 0;
    for (int i = nlimbs - 1; i >= 0; i--) {
        for (int bit = 63; bit >= 0; bit--) {
            if (started) fp_sqr(acc, acc);
            if ((exp[i] >> bit) & 1) {
                if (started) fp_mul(acc, acc, b);
                else { fp_copy(acc, b); started = 1; }
            }
        }
    }
    if (!started) fp_copy(acc, FP_ONE);
    fp_copy(out, acc);
}

static void fp_inv(fp_t out, const fp_t a) { fp_pow(out, a, P_MINUS_2, 6); }

/* returns 0 on success, -1 if not a square */
static int fp_sqrt(fp_t out, const fp_t a) {
    fp_t cand, chk;
    fp_pow(cand, a, SQRT_EXP, 6);
    fp_sqr(chk, cand);
    if (fp_cmp(chk, a) != 0) return -1;
    fp_copy(out, cand);
    return 0;
}

static void fp_from_raw(fp_t out, const uint64_t *raw) {
    fp_t tmp;
    memcpy(tmp, raw, sizeof(fp_t));
    fp_mul(out, tmp, R2_LIMBS);
}

static void fp_to_raw(uint64_t *raw, const fp_t a) {
    fp_t one = {1, 0, 0, 0, 0, 0};
    fp_t tmp;
    fp_mul(tmp, a, one);
    memcpy(raw, tmp, sizeof(fp_t));
}

/* big-endian canonical bytes <-> montgomery */
static int fp_from_bytes(fp_t out, const uint8_t *in) {
    fp_t raw;
    for (int i = 0; i < 6; i++) {
        uint64_t v = 0;
        for (int j = 0; j < 8; j++) v = (v << 8) | in[(5 - i) * 8 + j];
        raw[i] = v;
    }
    if (fp_cmp(raw, P_LIMBS) >= 0) return -1;
    fp_mul(out, raw, R2_LIMBS);
    return 0;
}

static void fp_to_bytes(uint8_t *out, const fp_t a) {
    fp_t raw;
    fp_to_raw(raw, a);
    for (int i = 0; i < 6; i++) {
        uint64_t v = raw[5 - i];
        for (int j = 0; j < 8; j++) out[i * 8 + j] = (uint8_t)(v >> (8 * (7 - j)));
    }
}

/* canonical-value comparison against (p-1)/2, for compressed sign bits */
static int fp_is_lex_large(const fp_t a) {
    fp_t raw;
    fp_to_raw(raw, a);
    for (int i = 5; i >= 0; i--) {
        if (raw[i] > P_MINUS_1_DIV_2[i]) return 1;
        if (raw[i] < P_MINUS_1_DIV_2[i]) return 0;
    }
    return 0;
}

/* ------------------------------------------------------------------ */
/* fp2 = fp[u] / (u^2 + 1)                                             */

static void fp2_copy(fp2_t *out, const fp2_t *a) { *out = *a; }

static void fp2_zero(fp2_t *out) { fp_zero(out->c0); fp_zero(out->c1); }

static void fp2_one(fp2_t *out) { fp_copy(out->c0, FP_ONE); fp_zero(out->c1); }

static int fp2_is_zero(const fp2_t *a) { return fp_is_zero(a->c0) && fp_is_zero(a->c1); }

static int fp2_eq(const fp2_t *a, const fp2_t *b) {
    return fp_cmp(a->c0, b->c0) == 0 && fp_cmp(a->c1, b->c1) == 0;
}

static void fp2_add(fp2_t *out, const fp2_t *a, const fp2_t *b) {
    fp_add(out->c0, a->c0, b->c0);
    fp_add(out->c1, a->c1, b->c1);
}

static void fp2_sub(fp2_t *out, const fp2_t *a, const fp2_t *b) {
    fp_sub(out->c0, a->c0, b->c0);
    fp_sub(out->c1, a->c1, b->c1);
}

static void fp2_neg(fp2_t *out, const fp2_t *a) {
    fp_neg(out->c0, a->c0);
    fp_neg(out->c1, a->c1);
}

static void fp2_dbl(fp2_t *out, const fp2_t *a) { fp2_add(out, a, a); }

static void fp2_conj(fp2_t *out, const fp2_t *a) {
    fp_copy(out->c0, a->c0);
    fp_neg(out->c1, a->c1);
}

static void fp2_mul(fp2_t *out, const fp2_t *a, const fp2_t *b) {
    fp_t t0, t1, s0, s1, r0, r1;
    fp_mul(t0, a->c0, b->c0);
    fp_mul(t1, a->c1, b->c1);
    fp_add(s0, a->c0, a->c1);
    fp_add(s1, b->c0, b->c1);
    fp_sub(r0, t0, t1);
    fp_mul(r1, s0, s1);
    fp_sub(r1, r1, t0);
    fp_sub(r1, r1, t1);
    fp_copy(out->c0, r0);
    fp_copy(out->c1, r1);
}

static void fp2_sqr(fp2_t *out, const fp2_t *a) {
    fp_t s, d, m, r0, r1;
    fp_add(s, a->c0, a->c1);
    fp_sub(d, a->c0, a->c1);
    fp_mul(m, a->c0, a->c1);
    fp_mul(r0, s, d);
    fp_dbl(r1, m);
    fp_copy(out->c0, r0);
    fp_copy(out->c1, r1);
}

static void fp2_mul_fp(fp2_t *out, const fp2_t *a, const fp_t k) {
    fp_mul(out->c0, a->c0, k);
    fp_mul(out->c1, a->c1, k);
}

/* multiply by the Fp6 non-residue xi = 1 + u */
static void fp2_mul_xi(fp2_t *out, const fp2_t *a) {
    fp_t t0, t1;
    fp_sub(t0, a->c0, a->c1);
    fp_add(t1, a->c0, a->c1);
    fp_copy(out->c0, t0);
    fp_copy(out->c1, t1);
}

static void fp2_inv(fp2_t *out, const fp2_t *a) {
    fp_t t0, t1, t;
    fp_sqr(t0, a->c0);
    fp_sqr(t1, a->c1);
    fp_add(t0, t0, t1);
    fp_inv(t, t0);
    fp_mul(out->c0, a->c0, t);
    fp_mul(t, a->c1, t);
    fp_neg(out->c1, t);
}

static void fp2_scale_small(fp2_t *out, const fp2_t *a, int k) {
    fp2_t acc;
    fp2_copy(&acc, a);
    for (int i = 1; i < k; i++) fp2_add(&acc, &acc, a);
    fp2_copy(out, &acc);
}

static void fp2_pow(fp2_t *out, const fp2_t *base, const uint64_t *exp, int nlimbs) {
    fp2_t acc, b;
    fp2_one(&acc);
    fp2_copy(&b, base);
    for (int i = nlimbs - 1; i >= 0; i--) {
        for (int bit = 63; bit >= 0; bit--) {
            fp2_sqr(&acc, &acc);
            if ((exp[i] >> bit) & 1) fp2_mul(&acc, &acc, &b);
        }
    }
    fp2_copy(out, &acc);
}

/* Fp2 square root for p = 3 mod 4; 0 on success, -1 if non-residue */
static int fp2_sqrt(fp2_t *out, const fp2_t *a) {
    fp2_t a1, x0, alpha, minus1, b, chk;
    fp2_pow(&a1, a, FP2_SQRT_EXP1, 6);
    fp2_mul(&x0, &a1, a);
    fp2_mul(&alpha, &a1, &x0);
    fp2_zero(&minus1);
    fp_neg(minus1.c0, FP_ONE);
    if (fp2_eq(&alpha, &minus1)) {
        /* multiply by u */
        fp_t t;
        fp_neg(t, x0.c1);
        fp_copy(out->c1, x0.c0);
        fp_copy(out->c0, t);
    } else {
        fp2_t one;
        fp2_one(&one);
        fp2_add(&b, &alpha, &one);
        fp2_pow(&b, &b, P_MINUS_1_DIV_2, 6);
        fp2_mul(out, &b, &x0);
    }
    fp2_sqr(&chk, out);
    return fp2_eq(&chk, a) ? 0 : -1;
}

/* ------------------------------------------------------------------ */
/* fp6 = fp2[v] / (v^3 - xi)                                           */

static void fp6_copy(fp6_t *out, const fp6_t *a) { *out = *a; }

static void fp6_zero(fp6_t *out) { for (int i = 0; i < 3; i++) fp2_zero(&out->c[i]); }

static void fp6_one(fp6_t *out) { fp6_zero(out); fp2_one(&out->c[0]); }

static void fp6_add(fp6_t *out, const fp6_t *a, const fp6_t *b) {
    for (int i = 0; i < 3; i++) fp2_add(&out->c[i], &a->c[i], &b->c[i]);
}

static void fp6_sub(fp6_t *out, const fp6_t *a, const fp6_t *b) {
    for (int i = 0; i < 3; i++) fp2_sub(&out->c[i], &a->c[i], &b->c[i]);
}

static void fp6_neg(fp6_t *out, const fp6_t *a) {
    for (int i = 0; i < 3; i++) fp2_neg(&out->c[i], &a->c[i]);
}

static void fp6_mul(fp6_t *out, const fp6_t *a, const fp6_t *b) {
    fp2_t t0, t1, t2, s0, s1, r0, r1, r2, tmp;
    fp2_mul(&t0, &a->c[0], &b->c[0]);
    fp2_mul(&t1, &a->c[1], &b->c[1]);
    fp2_mul(&t2, &a->c[2], &b->c[2]);

    fp2_add(&s0, &a->c[1], &a->c[2]);
    fp2_add(&s1, &b->c[1], &b->c[2]);
    fp2_mul(&r0, &s0, &s1);
    fp2_sub(&r0, &r0, &t1);
    fp2_sub(&r0, &r0, &t2);
    fp2_mul_xi(&r0, &r0);
    fp2_add(&r0, &r0, &t0);

    fp2_add(&s0, &a->c[0], &a->c[1]);
    fp2_add(&s1, &b->c[0], &b->c[1]);
    fp2_mul(&r1, &s0, &s1);
    fp2_sub(&r1, &r1, &t0);
    fp2_sub(&r1, &r1, &t1);
    fp2_mul_xi(&tmp, &t2);
    fp2_add(&r1, &r1, &tmp);

    fp2_add(&s0, &a->c[0], &a->c[2]);
    fp2_add(&s1, &b->c[0], &b->c[2]);
    fp2_mul(&r2, &s0, &s1);
    fp2_sub(&r2, &r2, &t0);
    fp2_sub(&r2, &r2, &t2);
    fp2_add(&r2, &r2, &t1);

    fp2_copy(&out->c[0], &r0);
    fp2_copy(&out->c[1], &r1);
    fp2_copy(&out->c[2], &r2);
}

/* multiply by v */
static void fp6_mul_v(fp6_t *out, const fp6_t *a) {
    fp2_t t;
    fp2_mul_xi(&t, &a->c[2]);
    fp2_copy(&out->c[2], &a->c[1]);
    fp2_copy(&out->c[1], &a->c[0]);
    fp2_copy(&out->c[0], &t);
}

static void fp6_inv(fp6_t *out, const fp6_t *a) {
    fp2_t A, B, C, t, f;
    fp2_sqr(&A, &a->c[0]);
    fp2_mul(&t, &a->c[1], &a->c[2]);
    fp2_mul_xi(&t, &t);
    fp2_sub(&A, &A, &t);

    fp2_sqr(&B, &a->c[2]);
    fp2_mul_xi(&B, &B);
    fp2_mul(&t, &a->c[0], &a->c[1]);
    fp2_sub(&B, &B, &t);

    fp2_sqr(&C, &a->c[1]);
    fp2_mul(&t, &a->c[0], &a->c[2]);
    fp2_sub(&C, &C, &t);

    /* f = c0*A + xi*(c2*B + c1*C) */
    fp2_mul(&f, &a->c[0], &A);
    fp2_mul(&t, &a->c[2], &B);
    {
        fp2_t t2;
        fp2_mul(&t2, &a->c[1], &C);
        fp2_add(&t, &t, &t2);
        fp2_mul_xi(&t, &t);
        fp2_add(&f, &f, &t);
    }
    fp2_inv(&f, &f);
    fp2_mul(&out->c[0], &A, &f);
    fp2_mul(&out->c[1], &B, &f);
    fp2_mul(&out->c[2], &C, &f);
}

/* ------------------------------------------------------------------ */
/* fp12 = fp6[w] / (w^2 - v)                                           */

static void fp12_copy(fp12_t *out, const fp12_t *a) { *out = *a; }

static void fp12_one(fp12_t *out) { fp6_one(&out->c[0]); fp6_zero(&out->c[1]); }

static int fp12_is_one(const fp12_t *a) {
    fp12_t one;
    fp12_one(&one);
    return memcmp(a, &one, sizeof(fp12_t)) == 0;
}

static int fp12_eq(const fp12_t *a, const fp12_t *b) {
    return memcmp(a, b, sizeof(fp12_t)) == 0;
}

static void fp12_mul(fp12_t *out, const fp12_t *a, const fp12_t *b) {
    fp6_t aa, bb, s0, s1, r0, r1;
    fp6_mul(&aa, &a->c[0], &b->c[0]);
    fp6_mul(&bb, &a->c[1], &b->c[1]);
    fp6_add(&s0, &a->c[0], &a->c[1]);
    fp6_add(&s1, &b->c[0], &b->c[1]);
    fp6_mul_v(&r0, &bb);
    fp6_add(&r0, &r0, &aa);
    fp6_mul(&r1, &s0, &s1);
    fp6_sub(&r1, &r1, &aa);
    fp6_sub(&r1, &r1, &bb);
    fp6_copy(&out->c[0], &r0);
    fp6_copy(&out->c[1], &r1);
}

static void fp12_sqr(fp12_t *out, const fp12_t *a) {
    fp6_t t0, t1, aa, r0, r1, tmp;
    fp6_add(&t0, &a->c[0], &a->c[1]);
    fp6_mul_v(&tmp, &a->c[1]);
    fp6_add(&t1, &a->c[0], &tmp);
    fp6_mul(&aa, &a->c[0], &a->c[1]);
    fp6_mul(&r0, &t0, &t1);
    fp6_sub(&r0, &r0, &aa);
    fp6_mul_v(&tmp, &aa);
    fp6_sub(&r0, &r0, &tmp);
    fp6_add(&r1, &aa, &aa);
    fp6_copy(&out->c[0], &r0);
    fp6_copy(&out->c[1], &r1);
}

static void fp12_conj(fp12_t *out, const fp12_t *a) {
    fp6_copy(&out->c[0], &a->c[0]);
    fp6_neg(&out->c[1], &a->c[1]);
}

static void fp12_inv(fp12_t *out, const fp12_t *a) {
    fp6_t t0, t1;
    fp6_mul(&t0, &a->c[0], &a->c[0]);
    fp6_mul(&t1, &a->c[1], &a->c[1]);
    fp6_mul_v(&t1, &t1);
    fp6_sub(&t0, &t0, &t1);
    fp6_inv(&t0, &t0);
    fp6_mul(&out->c[0], &a->c[0], &t0);
    fp6_mul(&t1, &a->c[1], &t0);
    fp6_neg(&out->c[1], &t1);
}

/* view: w-power coefficient k = i + 2j lives at c[i].c[j] */
static fp2_t *f12_coef(fp12_t *a, int k) {
    return &a->c[k & 1].c[k >> 1];
}

static const fp2_t *f12_coef_c(const fp12_t *a, int k) {
    return &a->c[k & 1].c[k >> 1];
}

static void fp12_frob(fp12_t *out, const fp12_t *a) {
    fp12_t r;
    for (int k = 0; k < 6; k++) {
        fp2_t t;
        fp2_conj(&t, f12_coef_c(a, k));
        fp2_mul(&t, &t, &FROB_GAMMA[k]);
        fp2_copy(f12_coef(&r, k), &t);
    }
    fp12_copy(out, &r);
}

/* squaring in the cyclotomic subgroup (Granger-Scott over Fp4 blocks) */
static void fp4_sq(fp2_t *o0, fp2_t *o1, const fp2_t *c0, const fp2_t *c1) {
    fp2_t t0, t1, s;
    fp2_sqr(&t0, c0);
    fp2_sqr(&t1, c1);
    fp2_add(&s, c0, c1);
    fp2_sqr(&s, &s);
    fp2_mul_xi(o0, &t1);
    fp2_add(o0, o0, &t0);
    fp2_sub(o1, &s, &t0);
    fp2_sub(o1, o1, &t1);
}

static void fp12_cyc_sqr(fp12_t *out, const fp12_t *a) {
    const fp2_t *a0 = f12_coef_c(a, 0), *a1 = f12_coef_c(a, 3);
    const fp2_t *b0 = f12_coef_c(a, 1), *b1 = f12_coef_c(a, 4);
    const fp2_t *c0 = f12_coef_c(a, 2), *c1 = f12_coef_c(a, 5);
    fp2_t t0, t1, u0, u1, v0, v1, w0, w1, tmp;
    fp12_t r;
    fp4_sq(&t0, &t1, a0, a1);
    fp4_sq(&u0, &u1, c0, c1);
    fp4_sq(&v0, &v1, b0, b1);

    /* A' = 3*A^2 - 2*conj(A) */
    fp2_scale_small(&w0, &t0, 3);
    fp2_dbl(&tmp, a0);
    fp2_sub(&w0, &w0, &tmp);
    fp2_copy(f12_coef(&r, 0), &w0);
    fp2_scale_small(&w1, &t1, 3);
    fp2_dbl(&tmp, a1);
    fp2_add(&w1, &w1, &tmp);
    fp2_copy(f12_coef(&r, 3), &w1);

    /* B' = 3*s*C^2 + 2*conj-adjusted B */
    fp2_mul_xi(&w0, &u1);
    fp2_scale_small(&w0, &w0, 3);
    fp2_dbl(&tmp, b0);
    fp2_add(&w0, &w0, &tmp);
    fp2_copy(f12_coef(&r, 1), &w0);
    fp2_scale_small(&w1, &u0, 3);
    fp2_dbl(&tmp, b1);
    fp2_sub(&w1, &w1, &tmp);
    fp2_copy(f12_coef(&r, 4), &w1);

    /* C' = 3*B^2 - 2*conj(C) */
    fp2_scale_small(&w0, &v0, 3);
    fp2_dbl(&tmp, c0);
    fp2_sub(&w0, &w0, &tmp);
    fp2_copy(f12_coef(&r, 2), &w0);
    fp2_scale_small(&w1, &v1, 3);
    fp2_dbl(&tmp, c1);
    fp2_add(&w1, &w1, &tmp);
    fp2_copy(f12_coef(&r, 5), &w1);

    fp12_copy(out, &r);
}

/* generic square-and-multiply, big-endian byte exponent */
static void fp12_pow_generic(fp12_t *out, const fp12_t *a, const uint8_t *exp, int len) {
    fp12_t acc, base;
    fp12_one(&acc);
    fp12_copy(&base, a);
    for (int i = 0; i < len; i++) {
        for (int bit = 7; bit >= 0; bit--) {
            fp12_sqr(&acc, &acc);
            if ((exp[i] >> bit) & 1) fp12_mul(&acc, &acc, &base);
        }
    }
    fp12_copy(out, &acc);
}

/* cyclotomic exponent by 64-bit magnitude; conjugate afterwards if negative */
static void fp12_cyc_exp64(fp12_t *out, const fp12_t *a, uint64_t mag, int negate) {
    fp12_t acc;
    fp12_one(&acc);
    int started = 0;
    for (int bit = 63; bit >= 0; bit--) {
        if (started) fp12_cyc_sqr(&acc, &acc);
        if ((mag >> bit) & 1) {
            if (started) fp12_mul(&acc, &acc, a);
            else { fp12_copy(&acc, a); started = 1; }
        }
    }
    if (negate) fp12_conj(&acc, &acc);
    fp12_copy(out, &acc);
}

/* ------------------------------------------------------------------ */
/* G1                                                                  */

static void g1_set_identity(g1p_t *p) {
    fp_zero(p->x);
    fp_copy(p->y, FP_ONE);
    fp_zero(p->z);
}

static int g1_is_identity_pt(const g1p_t *p) { return fp_is_zero(p->z); }

static void g1_dbl(g1p_t *out, const g1p_t *p) {
    if (g1_is_identity_pt(p)) { *out = *p; return; }
    fp_t A, B, C, D, E, F, X3, Y3, Z3, t;
    fp_sqr(A, p->x);
    fp_sqr(B, p->y);
    fp_sqr(C, B);
    fp_add(D, p->x, B);
    fp_sqr(D, D);
    fp_sub(D, D, A);
    fp_sub(D, D, C);
    fp_dbl(D, D);
    fp_add(E, A, A);
    fp_add(E, E, A);
    fp_sqr(F, E);
    fp_sub(X3, F, D);
    fp_sub(X3, X3, D);
    fp_sub(t, D, X3);
    fp_mul(Y3, E, t);
    fp_dbl(t, C);
    fp_dbl(t, t);
    fp_dbl(t, t);
    fp_sub(Y3, Y3, t);
    fp_mul(Z3, p->y, p->z);
    fp_dbl(Z3, Z3);
    fp_copy(out->x, X3);
    fp_copy(out->y, Y3);
    fp_copy(out->z, Z3);
}

static void g1_add_pt(g1p_t *out, const g1p_t *p, const g1p_t *q) {
    if (g1_is_identity_pt(p)) { *out = *q; return; }
    if (g1_is_identity_pt(q)) { *out = *p; return; }
    fp_t Z1Z1, Z2Z2, U1, U2, S1, S2, H, I, J, rr, V, X3, Y3, Z3, t;
    fp_sqr(Z1Z1, p->z);
    fp_sqr(Z2Z2, q->z);
    fp_mul(U1, p->x, Z2Z2);
    fp_mul(U2, q->x, Z1Z1);
    fp_mul(S1, p->y, q->z);
    fp_mul(S1, S1, Z2Z2);
    fp_mul(S2, q->y, p->z);
    fp_mul(S2, S2, Z1Z1);
    fp_sub(H, U2, U1);
    fp_sub(rr, S2, S1);
    if (fp_is_zero(H)) {
        if (fp_is_zero(rr)) { g1_dbl(out, p); return; }
        g1_set_identity(out);
        return;
    }
    fp_dbl(rr, rr);
    fp_dbl(I, H);
    fp_sqr(I, I);
    fp_mul(J, H, I);
    fp_mul(V, U1, I);
    fp_sqr(X3, rr);
    fp_sub(X3, X3, J);
    fp_sub(X3, X3, V);
    fp_sub(X3, X3, V);
    fp_sub(t, V, X3);
    fp_mul(Y3, rr, t);
    fp_mul(t, S1, J);
    fp_dbl(t, t);
    fp_sub(Y3, Y3, t);
    fp_add(Z3, p->z, q->z);
    fp_sqr(Z3, Z3);
    fp_sub(Z3, Z3, Z1Z1);
    fp_sub(Z3, Z3, Z2Z2);
    fp_mul(Z3, Z3, H);
    fp_copy(out->x, X3);
    fp_copy(out->y, Y3);
    fp_copy(out->z, Z3);
}

static void g1_neg_pt(g1p_t *out, const g1p_t *p) {
    fp_copy(out->x, p->x);
    fp_neg(out->y, p->y);
    fp_copy(out->z, p->z);
}

static void g1_mul_pt(g1p_t *out, const g1p_t *p, const uint8_t *sc, int slen) {
    g1p_t table[16];
    g1_set_identity(&table[0]);
    table[1] = *p;
    for (int i = 2; i < 16; i++) g1_add_pt(&table[i], &table[i - 1], p);
    g1p_t acc;
    g1_set_identity(&acc);
    int started = 0;
    for (int i = 0; i < slen; i++) {
        for (int half = 0; half < 2; half++) {
            int nib = half == 0 ? (sc[i] >> 4) : (sc[i] & 0xF);
            if (started) {
                g1_dbl(&acc, &acc);
                g1_dbl(&acc, &acc);
                g1_dbl(&acc, &acc);
                g1_dbl(&acc, &acc);
            }
            if (nib) {
                if (started) g1_add_pt(&acc, &acc, &table[nib]);
                else { acc = table[nib]; started = 1; }
            }
        }
    }
    *out = acc;
}

static void g1_to_affine(fp_t x, fp_t y, const g1p_t *p) {
    fp_t zi, zi2, zi3;
    fp_inv(zi, p->z);
    fp_sqr(zi2, zi);
    fp_mul(zi3, zi2, zi);
    fp_mul(x, p->x, zi2);
    fp_mul(y, p->y, zi3);
}

static int g1_eq_pt(const g1p_t *p, const g1p_t *q) {
    int pi = g1_is_identity_pt(p), qi = g1_is_identity_pt(q);
    if (pi || qi) return pi == qi;
    fp_t pz2, qz2, pz3, qz3, l, r;
    fp_sqr(pz2, p->z);
    fp_sqr(qz2, q->z);
    fp_mul(pz3, pz2, p->z);
    fp_mul(qz3, qz2, q->z);
    fp_mul(l, p->x, qz2);
    fp_mul(r, q->x, pz2);
    if (fp_cmp(l, r) != 0) return 0;
    fp_mul(l, p->y, qz3);
    fp_mul(r, q->y, pz3);
    return fp_cmp(l, r) == 0;
}

/* ------------------------------------------------------------------ */
/* G2 (same shapes over fp2)                                           */

static void g2_set_identity(g2p_t *p) {
    fp2_zero(&p->x);
    fp2_one(&p->y);
    fp2_zero(&p->z);
}

static int g2_is_identity_pt(const g2p_t *p) { return fp2_is_zero(&p->z); }

static void g2_dbl(g2p_t *out, const g2p_t *p) {
    if (g2_is_identity_pt(p)) { *out = *p; return; }
    fp2_t A, B, C, D, E, F, X3, Y3, Z3, t;
    fp2_sqr(&A, &p->x);
    fp2_sqr(&B, &p->y);
    fp2_sqr(&C, &B);
    fp2_add(&D, &p->x, &B);
    fp2_sqr(&D, &D);
    fp2_sub(&D, &D, &A);
    fp2_sub(&D, &D, &C);
    fp2_dbl(&D, &D);
    fp2_add(&E, &A, &A);
    fp2_add(&E, &E, &A);
    fp2_sqr(&F, &E);
    fp2_sub(&X3, &F, &D);
    fp2_sub(&X3, &X3, &D);
    fp2_sub(&t, &D, &X3);
    fp2_mul(&Y3, &E, &t);
    fp2_dbl(&t, &C);
    fp2_dbl(&t, &t);
    fp2_dbl(&t, &t);
    fp2_sub(&Y3, &Y3, &t);
    fp2_mul(&Z3, &p->y, &p->z);
    fp2_dbl(&Z3, &Z3);
    fp2_copy(&out->x, &X3);
    fp2_copy(&out->y, &Y3);
    fp2_copy(&out->z, &Z3);
}

static void g2_add_pt(g2p_t *out, const g2p_t *p, const g2p_t *q) {
    if (g2_is_identity_pt(p)) { *out = *q; return; }
    if (g2_is_identity_pt(q)) { *out = *p; return; }
    fp2_t Z1Z1, Z2Z2, U1, U2, S1, S2, H, I, J, rr, V, X3, Y3, Z3, t;
    fp2_sqr(&Z1Z1, &p->z);
    fp2_sqr(&Z2Z2, &q->z);
    fp2_mul(&U1, &p->x, &Z2Z2);
    fp2_mul(&U2, &q->x, &Z1Z1);
    fp2_mul(&S1, &p->y, &q->z);
    fp2_mul(&S1, &S1, &Z2Z2);
    fp2_mul(&S2, &q->y, &p->z);
    fp2_mul(&S2, &S2, &Z1Z1);
    fp2_sub(&H, &U2, &U1);
    fp2_sub(&rr, &S2, &S1);
    if (fp2_is_zero(&H)) {
        if (fp2_is_zero(&rr)) { g2_dbl(out, p); return; }
        g2_set_identity(out);
        return;
    }
    fp2_dbl(&rr, &rr);
    fp2_dbl(&I, &H);
    fp2_sqr(&I, &I);
    fp2_mul(&J, &H, &I);
    fp2_mul(&V, &U1, &I);
    fp2_sqr(&X3, &rr);
    fp2_sub(&X3, &X3, &J);
    fp2_sub(&X3, &X3, &V);
    fp2_sub(&X3, &X3, &V);
    fp2_sub(&t, &V, &X3);
    fp2_mul(&Y3, &rr, &t);
    fp2_mul(&t, &S1, &J);
    fp2_dbl(&t, &t);
    fp2_sub(&Y3, &Y3, &t);
    fp2_add(&Z3, &p->z, &q->z);
    fp2_sqr(&Z3, &Z3);
    fp2_sub(&Z3, &Z3, &Z1Z1);
    fp2_sub(&Z3, &Z3, &Z2Z2);
    fp2_mul(&Z3, &Z3, &H);
    fp2_copy(&out->x, &X3);
    fp2_copy(&out->y, &Y3);
    fp2_copy(&out->z, &Z3);
}

static void g2_neg_pt(g2p_t *out, const g2p_t *p) {
    fp2_copy(&out->x, &p->x);
    fp2_neg(&out->y, &p->y);
    fp2_copy(&out->z, &p->z);
}

static void g2_mul_pt(g2p_t *out, const g2p_t *p, const uint8_t *sc, int slen) {
    g2p_t table[16];
    g2_set_identity(&table[0]);
    table[1] = *p;
    for (int i = 2; i < 16; i++) g2_add_pt(&table[i], &table[i - 1], p);
    g2p_t acc;
    g2_set_identity(&acc);
    int started = 0;
    for (int i = 0; i < slen; i++) {
        for (int half = 0; half < 2; half++) {
            int nib = half == 0 ? (sc[i] >> 4) : (sc[i] & 0xF);
            if (started) {
                g2_dbl(&acc, &acc);
                g2_dbl(&acc, &acc);
                g2_dbl(&acc, &acc);
                g2_dbl(&acc, &acc);
            }
            if (nib) {
                if (started) g2_add_pt(&acc, &acc, &table[nib]);
                else { acc = table[nib]; started = 1; }
            }
        }
    }
    *out = acc;
}

static void g2_to_affine(fp2_t *x, fp2_t *y, const g2p_t *p) {
    fp2_t zi, zi2, zi3;
    fp2_inv(&zi, &p->z);
    fp2_sqr(&zi2, &zi);
    fp2_mul(&zi3, &zi2, &zi);
    fp2_mul(x, &p->x, &zi2);
    fp2_mul(y, &p->y, &zi3);
}

static int g2_eq_pt(const g2p_t *p, const g2p_t *q) {
    int pi = g2_is_identity_pt(p), qi = g2_is_identity_pt(q);
    if (pi || qi) return pi == qi;
    fp2_t pz2, qz2, pz3, qz3, l, r;
    fp2_sqr(&pz2, &p->z);
    fp2_sqr(&qz2, &q->z);
    fp2_mul(&pz3, &pz2, &p->z);
    fp2_mul(&qz3, &qz2, &q->z);
    fp2_mul(&l, &p->x, &qz2);
    fp2_mul(&r, &q->x, &pz2);
    if (!fp2_eq(&l, &r)) return 0;
    fp2_mul(&l, &p->y, &qz3);
    fp2_mul(&r, &q->y, &pz3);
    return fp2_eq(&l, &r);
}

/* ------------------------------------------------------------------ */
/* pairing                                                             */

/* Homogeneous-projective Miller state for the twisted point. */
typedef struct { fp2_t X, Y, Z; } mill_t;

/* tangent line at T evaluated at (xp, yp); also advances T to 2T.
 * A = 3X^2, D = 2YZ:
 *   line = (A*X - D*Y) + (-A*Z*xp) w^2 + (D*Z*yp) w^3
 *   X3 = D*(A^2 - 8XY^2Z), Y3 = 12AXY^2Z - A^3 - 8Y^4Z^2, Z3 = D^3
 */
static void mill_dbl_step(fp12_t *line, mill_t *t, const fp_t xp, const fp_t yp) {
    fp2_t A, D, t1, t2, XY2Z, Y2, c0, c2, c3, X3, Y3, Z3;
    fp2_sqr(&A, &t->X);
    fp2_scale_small(&A, &A, 3);
    fp2_mul(&D, &t->Y, &t->Z);
    fp2_dbl(&D, &D);

    fp2_mul(&c0, &A, &t->X);
    fp2_mul(&t1, &D, &t->Y);
    fp2_sub(&c0, &c0, &t1);

    fp2_mul(&c2, &A, &t->Z);
    fp2_mul_fp(&c2, &c2, xp);
    fp2_neg(&c2, &c2);

    fp2_mul(&c3, &D, &t->Z);
    fp2_mul_fp(&c3, &c3, yp);

    memset(line, 0, sizeof(fp12_t));
    fp2_copy(f12_coef(line, 0), &c0);
    fp2_copy(f12_coef(line, 2), &c2);
    fp2_copy(f12_coef(line, 3), &c3);

    fp2_sqr(&Y2, &t->Y);
    fp2_mul(&XY2Z, &t->X, &Y2);
    fp2_mul(&XY2Z, &XY2Z, &t->Z);        /* X*Y^2*Z */

    fp2_sqr(&t1, &A);                    /* A^2 */
    fp2_scale_small(&t2, &XY2Z, 8);
    fp2_sub(&t2, &t1, &t2);              /* A^2 - 8XY^2Z */
    fp2_mul(&X3, &D, &t2);

    fp2_scale_small(&Y3, &XY2Z, 12);
    fp2_mul(&Y3, &Y3, &A);               /* 12AXY^2Z */
    fp2_mul(&t2, &t1, &A);               /* A^3 */
    fp2_sub(&Y3, &Y3, &t2);
    fp2_sqr(&t2, &Y2);                   /* Y^4 */
    fp2_sqr(&t1, &t->Z);                 /* Z^2 */
    fp2_mul(&t2, &t2, &t1);
    fp2_scale_small(&t2, &t2, 8);
    fp2_sub(&Y3, &Y3, &t2);

    fp2_sqr(&Z3, &D);
    fp2_mul(&Z3, &Z3, &D);

    fp2_copy(&t->X, &X3);
    fp2_copy(&t->Y, &Y3);
    fp2_copy(&t->Z, &Z3);
}

/* chord line through T and affine Q evaluated at (xp, yp); advances T to T+Q.
 * theta = Y - yq*Z, E = X - xq*Z:
 *   line = (theta*xq - E*yq) + (-theta*xp) w^2 + (E*yp) w^3
 *   N = theta^2*Z - E^2*X - E^2*xq*Z
 *   X3 = E*N, Y3 = theta*(E^2*Z*xq - N) - yq*E^3*Z, Z3 = E^3*Z
 */
static void mill_add_step(fp12_t *line, mill_t *t, const fp2_t *xq, const fp2_t *yq,
                          const fp_t xp, const fp_t yp) {
    fp2_t theta, E, E2, E3Z, t1, t2, N, c0, c2, c3, X3, Y3, Z3;
    fp2_mul(&t1, yq, &t->Z);
    fp2_sub(&theta, &t->Y, &t1);
    fp2_mul(&t1, xq, &t->Z);
    fp2_sub(&E, &t->X, &t1);

    fp2_mul(&c0, &theta, xq);
    fp2_mul(&t1, &E, yq);
    fp2_sub(&c0, &c0, &t1);

    fp2_mul_fp(&c2, &theta, xp);
    fp2_neg(&c2, &c2);

    fp2_mul_fp(&c3, &E, yp);

    memset(line, 0, sizeof(fp12_t));
    fp2_copy(f12_coef(line, 0), &c0);
    fp2_copy(f12_coef(line, 2), &c2);
    fp2_copy(f12_coef(line, 3), &c3);

    fp2_sqr(&E2, &E);
    fp2_mul(&E3Z, &E2, &E);
    fp2_mul(&E3Z, &E3Z, &t->Z);          /* E^3*Z */

    fp2_sqr(&t1, &theta);
    fp2_mul(&t1, &t1, &t->Z);            /* theta^2*Z */
    fp2_mul(&t2, &E2, &t->X);
    fp2_sub(&N, &t1, &t2);
    fp2_mul(&t2, &E2, xq);
    fp2_mul(&t2, &t2, &t->Z);
    fp2_sub(&N, &N, &t2);

    fp2_mul(&X3, &E, &N);

    fp2_mul(&t1, &E2, &t->Z);
    fp2_mul(&t1, &t1, xq);               /* E^2*Z*xq */
    fp2_sub(&t1, &t1, &N);
    fp2_mul(&Y3, &theta, &t1);
    fp2_mul(&t2, yq, &E3Z);
    fp2_sub(&Y3, &Y3, &t2);

    fp2_copy(&Z3, &E3Z);

    fp2_copy(&t->X, &X3);
    fp2_copy(&t->Y, &Y3);
    fp2_copy(&t->Z, &Z3);
}

static void miller_loop(fp12_t *out, const fp_t xp, const fp_t yp,
                        const fp2_t *xq, const fp2_t *yq) {
    fp12_t f, line;
    fp12_one(&f);
    mill_t t;
    fp2_copy(&t.X, xq);
    fp2_copy(&t.Y, yq);
    fp2_one(&t.Z);
    for (int bit = 62; bit >= 0; bit--) {
        fp12_sqr(&f, &f);
        mill_dbl_step(&line, &t, xp, yp);
        fp12_mul(&f, &f, &line);
        if ((X_MAG >> bit) & 1) {
            mill_add_step(&line, &t, xq, yq, xp, yp);
            fp12_mul(&f, &f, &line);
        }
    }
    fp12_conj(out, &f);     /* parameter is negative */
}

static void final_exp(fp12_t *out, const fp12_t *f) {
    fp12_t t, inv, t2, m, t0, t1, acc, tmp;
    /* easy: f^((p^6-1)(p^2+1)) */
    fp12_inv(&inv, f);
    fp12_conj(&t, f);
    fp12_mul(&t, &t, &inv);
    fp12_frob(&t2, &t);
    fp12_frob(&t2, &t2);
    fp12_mul(&m, &t2, &t);
    /* hard (cubed): m^((x-1)^2 * (x+p) * (x^2+p^2-1)) * m^3 */
    fp12_cyc_exp64(&t0, &m, X_MINUS_1_MAG, 1);
    fp12_cyc_exp64(&t0, &t0, X_MINUS_1_MAG, 1);
    fp12_cyc_exp64(&t1, &t0, X_MAG, 1);
    fp12_frob(&tmp, &t0);
    fp12_mul(&t1, &t1, &tmp);
    fp12_cyc_exp64(&acc, &t1, X_MAG, 1);
    fp12_cyc_exp64(&acc, &acc, X_MAG, 1);
    fp12_frob(&tmp, &t1);
    fp12_frob(&tmp, &tmp);
    fp12_mul(&acc, &acc, &tmp);
    fp12_conj(&tmp, &t1);
    fp12_mul(&acc, &acc, &tmp);
    fp12_cyc_sqr(&tmp, &m);
    fp12_mul(&tmp, &tmp, &m);
    fp12_mul(out, &acc, &tmp);
}

/* ------------------------------------------------------------------ */
/* exported API                                                        */

static int INITIALIZED = 0;

int bls_init(void) {
    if (INITIALIZED) return 0;
    fp_t one_raw = {1, 0, 0, 0, 0, 0};
    fp_mul(FP_ONE, one_raw, R2_LIMBS);
    fp_t four_raw = {4, 0, 0, 0, 0, 0};
    fp_mul(FP_FOUR, four_raw, R2_LIMBS);
    fp_copy(FP2_B.c0, FP_FOUR);
    fp_copy(FP2_B.c1, FP_FOUR);

    fp2_t xi;
    fp_copy(xi.c0, FP_ONE);
    fp_copy(xi.c1, FP_ONE);
    fp2_t gamma1;
    fp2_pow(&gamma1, &xi, FROB_EXP, 6);
    fp2_one(&FROB_GAMMA[0]);
    for (int k = 1; k < 6; k++) fp2_mul(&FROB_GAMMA[k], &FROB_GAMMA[k - 1], &gamma1);

    fp_from_raw(G1_GEN.x, G1X_RAW);
    fp_from_raw(G1_GEN.y, G1Y_RAW);
    fp_copy(G1_GEN.z, FP_ONE);
    fp_from_raw(G2_GEN.x.c0, G2X0_RAW);
    fp_from_raw(G2_GEN.x.c1, G2X1_RAW);
    fp_from_raw(G2_GEN.y.c0, G2Y0_RAW);
    fp_from_raw(G2_GEN.y.c1, G2Y1_RAW);
    fp2_one(&G2_GEN.z);

    /* self-check: montgomery round trip and generators on their curves */
    fp_t chk;
    fp_to_raw(chk, FP_ONE);
    if (chk[0] != 1) return -1;
    for (int i = 1; i < 6; i++) if (chk[i]) return -1;
    fp_t y2, x3;
    fp_sqr(y2, G1_GEN.y);
    fp_sqr(x3, G1_GEN.x);
    fp_mul(x3, x3, G1_GEN.x);
    fp_add(x3, x3, FP_FOUR);
    if (fp_cmp(y2, x3) != 0) return -1;
    fp2_t qy2, qx3;
    fp2_sqr(&qy2, &G2_GEN.y);
    fp2_sqr(&qx3, &G2_GEN.x);
    fp2_mul(&qx3, &qx3, &G2_GEN.x);
    fp2_add(&qx3, &qx3, &FP2_B);
    if (!fp2_eq(&qy2, &qx3)) return -1;
    INITIALIZED = 1;
    return 0;
}

void bls_g1_gen(uint64_t *out) { memcpy(out, &G1_GEN, sizeof(g1p_t)); }
void bls_g1_identity(uint64_t *out) { g1p_t p; g1_set_identity(&p); memcpy(out, &p, sizeof p); }
int bls_g1_is_identity(const uint64_t *a) { return g1_is_identity_pt((const g1p_t *)a); }
int bls_g1_eq(const uint64_t *a, const uint64_t *b) { return g1_eq_pt((const g1p_t *)a, (const g1p_t *)b); }
void bls_g1_add(uint64_t *out, const uint64_t *a, const uint64_t *b) {
    g1p_t r;
    g1_add_pt(&r, (const g1p_t *)a, (const g1p_t *)b);
    memcpy(out, &r, sizeof r);
}
void bls_g1_neg(uint64_t *out, const uint64_t *a) {
    g1p_t r;
    g1_neg_pt(&r, (const g1p_t *)a);
    memcpy(out, &r, sizeof r);
}
void bls_g1_mul(uint64_t *out, const uint64_t *a, const uint8_t *sc, int slen) {
    g1p_t r;
    g1_mul_pt(&r, (const g1p_t *)a, sc, slen);
    memcpy(out, &r, sizeof r);
}
int bls_g1_in_group(const uint64_t *a) {
    g1p_t r;
    g1_mul_pt(&r, (const g1p_t *)a, R_BYTES, 32);
    return g1_is_identity_pt(&r);
}

void bls_g1_to_bytes(uint8_t *out, const uint64_t *a) {
    const g1p_t *p = (const g1p_t *)a;
    if (g1_is_identity_pt(p)) {
        memset(out, 0, 48);
        out[0] = 0xC0;
        return;
    }
    fp_t x, y;
    g1_to_affine(x, y, p);
    fp_to_bytes(out, x);
    out[0] |= 0x80;
    if (fp_is_lex_large(y)) out[0] |= 0x20;
}

int bls_g1_from_bytes(uint64_t *out, const uint8_t *in) {
    uint8_t flags = in[0];
    if (!(flags & 0x80)) return -1;
    if (flags & 0x40) {
        if (flags != 0xC0) return -1;
        for (int i = 1; i < 48; i++) if (in[i]) return -1;
        g1p_t p;
        g1_set_identity(&p);
        memcpy(out, &p, sizeof p);
        return 0;
    }
    uint8_t buf[48];
    memcpy(buf, in, 48);
    buf[0] &= 0x1F;
    g1p_t p;
    if (fp_from_bytes(p.x, buf) != 0) return -1;
    fp_t rhs;
    fp_sqr(rhs, p.x);
    fp_mul(rhs, rhs, p.x);
    fp_add(rhs, rhs, FP_FOUR);
    if (fp_sqrt(p.y, rhs) != 0) return -1;
    if (fp_is_lex_large(p.y) != ((flags >> 5) & 1)) fp_neg(p.y, p.y);
    fp_copy(p.z, FP_ONE);
    memcpy(out, &p, sizeof p);
    return 0;
}

void bls_g2_gen(uint64_t *out) { memcpy(out, &G2_GEN, sizeof(g2p_t)); }
void bls_g2_identity(uint64_t *out) { g2p_t p; g2_set_identity(&p); memcpy(out, &p, sizeof p); }
int bls_g2_is_identity(const uint64_t *a) { return g2_is_identity_pt((const g2p_t *)a); }
int bls_g2_eq(const uint64_t *a, const uint64_t *b) { return g2_eq_pt((const g2p_t *)a, (const g2p_t *)b); }
void bls_g2_add(uint64_t *out, const uint64_t *a, const uint64_t *b) {
    g2p_t r;
    g2_add_pt(&r, (const g2p_t *)a, (const g2p_t *)b);
    memcpy(out, &r, sizeof r);
}
void bls_g2_neg(uint64_t *out, const uint64_t *a) {
    g2p_t r;
    g2_neg_pt(&r, (const g2p_t *)a);
    memcpy(out, &r, sizeof r);
}
void bls_g2_mul(uint64_t *out, const uint64_t *a, const uint8_t *sc, int slen) {
    g2p_t r;
    g2_mul_pt(&r, (const g2p_t *)a, sc, slen);
    memcpy(out, &r, sizeof r);
}
int bls_g2_in_group(const uint64_t *a) {
    g2p_t r;
    g2_mul_pt(&r, (const g2p_t *)a, R_BYTES, 32);
    return g2_is_identity_pt(&r);
}

void bls_g2_to_bytes(uint8_t *out, const uint64_t *a) {
    const g2p_t *p = (const g2p_t *)a;
    if (g2_is_identity_pt(p)) {
        memset(out, 0, 96);
        out[0] = 0xC0;
        return;
    }
    fp2_t x, y;
    g2_to_affine(&x, &y, p);
    fp_to_bytes(out, x.c1);
    fp_to_bytes(out + 48, x.c0);
    out[0] |= 0x80;
    int big = fp_is_lex_large(y.c1) || (fp_is_zero(y.c1) && fp_is_lex_large(y.c0));
    if (big) out[0] |= 0x20;
}

int bls_g2_from_bytes(uint64_t *out, const uint8_t *in) {
    uint8_t flags = in[0];
    if (!(flags & 0x80)) return -1;
    if (flags & 0x40) {
        if (flags != 0xC0) return -1;
        for (int i = 1; i < 96; i++) if (in[i]) return -1;
        g2p_t p;
        g2_set_identity(&p);
        memcpy(out, &p, sizeof p);
        return 0;
    }
    uint8_t buf[48];
    memcpy(buf, in, 48);
    buf[0] &= 0x1F;
    g2p_t p;
    if (fp_from_bytes(p.x.c1, buf) != 0) return -1;
    if (fp_from_bytes(p.x.c0, in + 48) != 0) return -1;
    fp2_t rhs;
    fp2_sqr(&rhs, &p.x);
    fp2_mul(&rhs, &rhs, &p.x);
    fp2_add(&rhs, &rhs, &FP2_B);
    if (fp2_sqrt(&p.y, &rhs) != 0) return -1;
    int big = fp_is_lex_large(p.y.c1) || (fp_is_zero(p.y.c1) && fp_is_lex_large(p.y.c0));
    if (big != ((flags >> 5) & 1)) fp2_neg(&p.y, &p.y);
    fp2_one(&p.z);
    memcpy(out, &p, sizeof p);
    return 0;
}

void bls_gt_one(uint64_t *out) { fp12_t r; fp12_one(&r); memcpy(out, &r, sizeof r); }
int bls_gt_is_one(const uint64_t *a) { return fp12_is_one((const fp12_t *)a); }
int bls_gt_eq(const uint64_t *a, const uint64_t *b) { return fp12_eq((const fp12_t *)a, (const fp12_t *)b); }
void bls_gt_mul(uint64_t *out, const uint64_t *a, const uint64_t *b) {
    fp12_t r;
    fp12_mul(&r, (const fp12_t *)a, (const fp12_t *)b);
    memcpy(out, &r, sizeof r);
}

/* valid for elements of the r-order subgroup (all GT values) */
void bls_gt_inv(uint64_t *out, const uint64_t *a) {
    fp12_t r;
    fp12_conj(&r, (const fp12_t *)a);
    memcpy(out, &r, sizeof r);
}

void bls_gt_exp(uint64_t *out, const uint64_t *a, const uint8_t *sc, int slen) {
    fp12_t acc, base;
    fp12_copy(&base, (const fp12_t *)a);
    fp12_one(&acc);
    int started = 0;
    for (int i = 0; i < slen; i++) {
        for (int bit = 7; bit >= 0; bit--) {
            if (started) fp12_cyc_sqr(&acc, &acc);
            if ((sc[i] >> bit) & 1) {
                if (started) fp12_mul(&acc, &acc, &base);
                else { fp12_copy(&acc, &base); started = 1; }
            }
        }
    }
    if (!started) fp12_one(&acc);
    memcpy(out, &acc, sizeof acc);
}

void bls_gt_to_bytes(uint8_t *out, const uint64_t *a) {
    const fp12_t *f = (const fp12_t *)a;
    int off = 0;
    for (int i = 0; i < 2; i++)
        for (int j = 0; j < 3; j++) {
            fp_to_bytes(out + off, f->c[i].c[j].c0);
            off += 48;
            fp_to_bytes(out + off, f->c[i].c[j].c1);
            off += 48;
        }
}

int bls_gt_from_bytes(uint64_t *out, const uint8_t *in) {
    fp12_t f;
    int off = 0;
    for (int i = 0; i < 2; i++)
        for (int j = 0; j < 3; j++) {
            if (fp_from_bytes(f.c[i].c[j].c0, in + off) != 0) return -1;
            off += 48;
            if (fp_from_bytes(f.c[i].c[j].c1, in + off) != 0) return -1;
            off += 48;
        }
    /* subgroup check: f^r == 1 (generic exponentiation; membership unknown) */
    fp12_t chk;
    fp12_pow_generic(&chk, &f, R_BYTES, 32);
    if (!fp12_is_one(&chk)) return -1;
    memcpy(out, &f, sizeof f);
    return 0;
}

void bls_pairing(uint64_t *out, const uint64_t *p, const uint64_t *q) {
    const g1p_t *pp = (const g1p_t *)p;
    const g2p_t *qq = (const g2p_t *)q;
    if (g1_is_identity_pt(pp) || g2_is_identity_pt(qq)) {
        bls_gt_one(out);
        return;
    }
    fp_t xp, yp;
    g1_to_affine(xp, yp, pp);
    fp2_t xq, yq;
    g2_to_affine(&xq, &yq, qq);
    fp12_t ml, r;
    miller_loop(&ml, xp, yp, &xq, &yq);
    final_exp(&r, &ml);
    memcpy(out, &r, sizeof r);
}

/* ------------------------------------------------------------------ */
/* test hooks (canonical big-endian byte interfaces)                   */

void bls_tst_fp_mul(uint8_t *out, const uint8_t *a, const uint8_t *b) {
    fp_t fa, fb, r;
    fp_from_bytes(fa, a);
    fp_from_bytes(fb, b);
    fp_mul(r, fa, fb);
    fp_to_bytes(out, r);
}

int bls_tst_fp_inv(uint8_t *out, const uint8_t *a) {
    fp_t fa, r;
    if (fp_from_bytes(fa, a) != 0) return -1;
    fp_inv(r, fa);
    fp_to_bytes(out, r);
    return 0;
}

int bls_tst_fp_sqrt(uint8_t *out, const uint8_t *a) {
    fp_t fa, r;
    if (fp_from_bytes(fa, a) != 0) return -1;
    if (fp_sqrt(r, fa) != 0) return -1;
    fp_to_bytes(out, r);
    return 0;
}

void bls_tst_fp2_mul(uint8_t *out, const uint8_t *a, const uint8_t *b) {
    fp2_t fa, fb, r;
    fp_from_bytes(fa.c0, a);
    fp_from_bytes(fa.c1, a + 48);
    fp_from_bytes(fb.c0, b);
    fp_from_bytes(fb.c1, b + 48);
    fp2_mul(&r, &fa, &fb);
    fp_to_bytes(out, r.c0);
    fp_to_bytes(out + 48, r.c1);
}

int bls_tst_fp2_sqrt(uint8_t *out, const uint8_t *a) {
    fp2_t fa, r;
    if (fp_from_bytes(fa.c0, a) != 0) return -1;
    if (fp_from_bytes(fa.c1, a + 48) != 0) return -1;
    if (fp2_sqrt(&r, &fa) != 0) return -1;
    fp_to_bytes(out, r.c0);
    fp_to_bytes(out + 48, r.c1);
    return 0;
}

static void tst_fp12_from_bytes(fp12_t *f, const uint8_t *in) {
    int off = 0;
    for (int i = 0; i < 2; i++)
        for (int j = 0; j < 3; j++) {
            fp_from_bytes(f->c[i].c[j].c0, in + off);
            off += 48;
            fp_from_bytes(f->c[i].c[j].c1, in + off);
            off += 48;
        }
}

void bls_tst_fp12_mul(uint8_t *out, const uint8_t *a, const uint8_t *b) {
    fp12_t fa, fb, r;
    tst_fp12_from_bytes(&fa, a);
    tst_fp12_from_bytes(&fb, b);
    fp12_mul(&r, &fa, &fb);
    bls_gt_to_bytes(out, (const uint64_t *)&r);
}

void bls_tst_fp12_sqr(uint8_t *out, const uint8_t *a) {
    fp12_t fa, r;
    tst_fp12_from_bytes(&fa, a);
    fp12_sqr(&r, &fa);
    bls_gt_to_bytes(out, (const uint64_t *)&r);
}

void bls_tst_cyc_sqr(uint8_t *out, const uint8_t *a) {
    fp12_t fa, r;
    tst_fp12_from_bytes(&fa, a);
    fp12_cyc_sqr(&r, &fa);
    bls_gt_to_bytes(out, (const uint64_t *)&r);
}

void bls_tst_frob(uint8_t *out, const uint8_t *a) {
    fp12_t fa, r;
    tst_fp12_from_bytes(&fa, a);
    fp12_frob(&r, &fa);
    bls_gt_to_bytes(out, (const uint64_t *)&r);
}

void bls_tst_miller(uint8_t *out, const uint64_t *p, const uint64_t *q) {
    fp_t xp, yp;
    g1_to_affine(xp, yp, (const g1p_t *)p);
    fp2_t xq, yq;
    g2_to_affine(&xq, &yq, (const g2p_t *)q);
    fp12_t ml;
    miller_loop(&ml, xp, yp, &xq, &yq);
    bls_gt_to_bytes(out, (const uint64_t *)&ml);
}
