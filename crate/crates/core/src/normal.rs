//! Standard normal distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal distribution function Φ(x).
#[inline]
pub fn cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Φ(x) with a single exponential (Hart's rational approximation), for
/// inner integration loops. Relative error below 1e-8, absolute below
/// 1e-15.
#[inline]
pub fn cdf_fast(x: f64) -> f64 {
    let a = x.abs();
    let tail = if a > 37.0 {
        0.0
    } else {
        let e = (-0.5 * a * a).exp();
        if a < 7.071_067_811_865_47 {
            const P: [f64; 7] = [
                3.526_249_659_989_11e-2,
                0.700_383_064_443_688,
                6.373_962_203_531_65,
                33.912_866_078_383,
                112.079_291_497_871,
                221.213_596_169_931,
                220.206_867_912_376,
            ];
            const Q: [f64; 8] = [
                8.838_834_764_831_84e-2,
                1.755_667_163_182_64,
                16.064_177_579_207,
                86.780_732_202_946_1,
                296.564_248_779_674,
                637.333_633_378_831,
                793.826_512_519_948,
                440.413_735_824_752,
            ];
            let num = P.iter().fold(0.0, |acc, c| acc * a + c);
            let den = Q.iter().fold(0.0, |acc, c| acc * a + c);
            e * num / den
        } else {
            let b = a + 1.0 / (a + 2.0 / (a + 3.0 / (a + 4.0 / (a + 0.65))));
            e / b / 2.506_628_274_631
        }
    };
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Upper tail 1 − Φ(x), accurate for large x.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Inverse of Φ (Wichura's AS241, about 1e-16 relative accuracy).
pub fn quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_854e3 * r + 2.872_908_573_572_194e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

// Gauss-Legendre half-rules on [-1, 0] used by the bivariate integral.
const GL6_X: [f64; 3] = [-0.932_469_514_203_152, -0.661_209_386_466_264_5, -0.238_619_186_083_196_9];
const GL6_W: [f64; 3] = [0.171_324_492_379_169_75, 0.360_761_573_048_138_94, 0.467_913_934_572_691_37];
const GL12_X: [f64; 6] = [
    -0.981_560_634_246_719_2,
    -0.904_117_256_370_474_8,
    -0.769_902_674_194_304_7,
    -0.587_317_954_286_617_5,
    -0.367_831_498_998_180_2,
    -0.125_233_408_511_468_9,
];
const GL12_W: [f64; 6] = [
    0.047_175_336_386_512_02,
    0.106_939_325_995_318_88,
    0.160_078_328_543_346_1,
    0.203_167_426_723_065_65,
    0.233_492_536_538_354_64,
    0.249_147_045_813_402_7,
];
const GL20_X: [f64; 10] = [
    -0.993_128_599_185_094_9,
    -0.963_971_927_277_913_8,
    -0.912_234_428_251_325_8,
    -0.839_116_971_822_218_8,
    -0.746_331_906_460_150_8,
    -0.636_053_680_726_515,
    -0.510_867_001_950_827_1,
    -0.373_706_088_715_419_55,
    -0.227_785_851_141_645_1,
    -0.076_526_521_133_497_34,
];
const GL20_W: [f64; 10] = [
    0.017_614_007_139_153_273,
    0.040_601_429_800_386_22,
    0.062_672_048_334_109_44,
    0.083_276_741_576_704_67,
    0.101_930_119_817_240_26,
    0.118_194_531_961_518_25,
    0.131_688_638_449_176_53,
    0.142_096_109_318_381_87,
    0.149_172_986_472_603_66,
    0.152_753_387_130_725_78,
];

/// Upper orthant probability P(X > h, Y > k) for standard normals with
/// correlation `rho` (Drezner–Wesolowsky with Genz's refinements).
pub fn bvn_upper(h: f64, k: f64, rho: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return sf(k);
    }
    if k == f64::NEG_INFINITY {
        return sf(h);
    }
    let rho = rho.clamp(-1.0, 1.0);
    let (xs, ws): (&[f64], &[f64]) = if rho.abs() < 0.3 {
        (&GL6_X, &GL6_W)
    } else if rho.abs() < 0.75 {
        (&GL12_X, &GL12_W)
    } else {
        (&GL20_X, &GL20_W)
    };
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if rho.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = rho.asin();
        for (x, w) in xs.iter().zip(ws) {
            let sn = (asr * (x + 1.0) / 2.0).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            let sn = (asr * (-x + 1.0) / 2.0).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        return bvn * asr / (4.0 * PI) + sf(h) * sf(k);
    }
    if rho < 0.0 {
        k = -k;
        hk = -hk;
    }
    if rho.abs() < 1.0 {
        let a_s = (1.0 - rho) * (1.0 + rho);
        let mut a = a_s.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(bs / a_s + hk) / 2.0).exp()
            * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp()
                * (2.0 * PI).sqrt()
                * cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (x, w) in xs.iter().zip(ws) {
            let xs1 = (a * (x + 1.0)).powi(2);
            let rs = (1.0 - xs1).sqrt();
            bvn += a
                * w
                * ((-bs / (2.0 * xs1) - hk / (1.0 + rs)).exp() / rs
                    - (-(bs / xs1 + hk) / 2.0).exp() * (1.0 + c * xs1 * (1.0 + d * xs1)));
            let xs2 = a_s * (-x + 1.0).powi(2) / 4.0;
            let rs = (1.0 - xs2).sqrt();
            bvn += a
                * w
                * (-(bs / xs2 + hk) / 2.0).exp()
                * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                    - (1.0 + c * xs2 * (1.0 + d * xs2)));
        }
        bvn = -bvn / (2.0 * PI);
    }
    if rho > 0.0 {
        bvn + sf(h.max(k))
    } else {
        -bvn + (sf(h) - sf(k)).max(0.0)
    }
}

/// Bivariate distribution function P(X ≤ h, Y ≤ k) for standard normals
/// with correlation `rho`.
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> f64 {
    bvn_upper(-h, -k, rho).clamp(0.0, 1.0)
}
