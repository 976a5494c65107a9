//! Gauss–Kronrod panels, adaptive bisection and the fixed-grid rules used
//! for `x`-integrals over the well.

use crate::model::C64;

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// One node of a Gauss–Kronrod panel: abscissa plus Kronrod and Gauss weights
/// (the Gauss weight is zero at Kronrod-only nodes).
#[derive(Debug, Clone, Copy)]
pub struct PanelNode {
    pub x: f64,
    pub kronrod: f64,
    pub gauss: f64,
}

/// The 21 nodes of the Gauss–Kronrod rule mapped to `[a, b]`, in a fixed order.
pub fn panel_nodes(a: f64, b: f64) -> [PanelNode; 21] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [PanelNode {
        x: c,
        kronrod: WGK[10] * h,
        gauss: 0.0,
    }; 21];
    for j in 0..10 {
        // odd indices of XGK are Gauss nodes
        let gw = if j % 2 == 1 { WG[j / 2] * h } else { 0.0 };
        out[2 * j] = PanelNode {
            x: c - h * XGK[j],
            kronrod: WGK[j] * h,
            gauss: gw,
        };
        out[2 * j + 1] = PanelNode {
            x: c + h * XGK[j],
            kronrod: WGK[j] * h,
            gauss: gw,
        };
    }
    out
}

/// Kronrod estimate and `|K - G|` for a complex integrand on one panel.
pub fn gk21<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let mut k = C64::new(0.0, 0.0);
    let mut g = C64::new(0.0, 0.0);
    for node in panel_nodes(a, b) {
        let v = f(node.x);
        k += v * node.kronrod;
        g += v * node.gauss;
    }
    (k, (k - g).norm())
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: C64,
    pub error: f64,
}

/// Adaptive bisection of `[a, b]`, starting from `initial_panels` equal
/// panels; a panel of width `w` is accepted when its error is below
/// `tol · w / (b - a)`. Panels are processed in order so the result is
/// reproducible bit for bit.
pub fn adaptive<F: Fn(f64) -> C64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    initial_panels: usize,
    max_depth: u32,
) -> Integral {
    let n = initial_panels.max(1);
    let width = (b - a) / n as f64;
    let density = tol / (b - a).abs();
    let mut total = Integral {
        value: C64::new(0.0, 0.0),
        error: 0.0,
    };
    for i in 0..n {
        let lo = a + width * i as f64;
        let hi = if i + 1 == n { b } else { lo + width };
        refine(f, lo, hi, density, max_depth, &mut total);
    }
    total
}

fn refine<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, density: f64, depth: u32, acc: &mut Integral) {
    let (v, e) = gk21(f, a, b);
    if e <= density * (b - a).abs() || depth == 0 {
        acc.value += v;
        acc.error += e;
        return;
    }
    let m = 0.5 * (a + b);
    refine(f, a, m, density, depth - 1, acc);
    refine(f, m, b, density, depth - 1, acc);
}

/// Trapezoid rule on a uniform grid with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Composite Simpson rule on a uniform grid (odd number of nodes required,
/// falls back to the trapezoid rule otherwise).
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 3 || n % 2 == 0 {
        return trapezoid(values, h);
    }
    let mut s = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_panel_width() {
        let nodes = panel_nodes(-1.0, 3.0);
        let k: f64 = nodes.iter().map(|n| n.kronrod).sum();
        let g: f64 = nodes.iter().map(|n| n.gauss).sum();
        assert!((k - 4.0).abs() < 1e-14);
        assert!((g - 4.0).abs() < 1e-14);
        assert_eq!(nodes.iter().filter(|n| n.gauss != 0.0).count(), 10);
    }

    #[test]
    fn gauss_part_exact_for_degree_19() {
        let f = |x: f64| C64::new(x.powi(19) + x.powi(2), 0.0);
        let nodes = panel_nodes(0.0, 1.0);
        let g: f64 = nodes.iter().map(|n| n.gauss * f(n.x).re).sum();
        assert!((g - (1.0 / 20.0 + 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn adaptive_oscillatory() {
        // ∫₀^{10} e^{i 30 x} dx = (e^{300 i} - 1) / (30 i)
        let f = |x: f64| C64::new(0.0, 30.0 * x).exp();
        let r = adaptive(&f, 0.0, 10.0, 1e-12, 4, 30);
        let exact = (C64::new(0.0, 300.0).exp() - 1.0) / C64::new(0.0, 30.0);
        assert!((r.value - exact).norm() < 1e-12);
        assert!(r.error < 1e-12);
    }

    #[test]
    fn trapezoid_and_simpson() {
        let h = 0.01;
        let v: Vec<f64> = (0..=100).map(|i| (i as f64 * h).powi(2)).collect();
        assert!((simpson(&v, h) - 1.0 / 3.0).abs() < 1e-15);
        assert!((trapezoid(&v, h) - 1.0 / 3.0).abs() < 2e-5);
        assert_eq!(trapezoid(&[3.0], 1.0), 0.0);
    }
}
