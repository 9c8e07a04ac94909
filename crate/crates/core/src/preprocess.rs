//! Spectrum conditioning: iterative polynomial baseline subtraction with
//! Rayleigh masking, standard-normal-variate normalization, local-polynomial
//! smoothing, and stripe drift correction against a reference peak.

use crate::error::{Error, Result};
use crate::hsdata::{FreqAxis, HyperCube};
use crate::numerics::mat::{solve_spd, Mat};
use crate::stats::{mean, sample_std};

/// Settings for [`subtract_baseline`].
#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub poly_order: usize,
    pub max_iter: usize,
    /// Relative-change convergence threshold on the working curve.
    pub tol: f64,
    /// GHz intervals masked from the baseline fit and zeroed in the output
    /// (Rayleigh lines and anything else to exclude from analysis).
    pub exclusion_windows: Vec<(f64, f64)>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            poly_order: 5,
            max_iter: 100,
            tol: 1e-4,
            exclusion_windows: Vec::new(),
        }
    }
}

impl BaselineConfig {
    /// Default Rayleigh masks: ±1.5 GHz around zero and around the FSR edge.
    pub fn with_rayleigh_masks(mut self, fsr: f64) -> Self {
        self.exclusion_windows.push((-1.5, 1.5));
        self.exclusion_windows.push((fsr - 1.5, fsr + 1.5));
        self
    }

    fn validate(&self, axis: &FreqAxis) -> Result<()> {
        if self.poly_order < 1 {
            return Err(Error::InvalidParameter("poly_order must be ≥ 1".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidParameter("max_iter must be ≥ 1".into()));
        }
        if self.tol < 0.0 {
            return Err(Error::InvalidParameter("tol must be nonnegative".into()));
        }
        for &(lo, hi) in &self.exclusion_windows {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "exclusion window ({lo}, {hi}) must satisfy lo < hi"
                )));
            }
            if hi < axis.min() || lo > axis.max() {
                return Err(Error::InvalidParameter(format!(
                    "exclusion window ({lo}, {hi}) lies outside the axis range"
                )));
            }
        }
        Ok(())
    }
}

fn masked(cfg: &BaselineConfig, nu: f64) -> bool {
    cfg.exclusion_windows.iter().any(|&(lo, hi)| nu >= lo && nu <= hi)
}

/// Least-squares polynomial fit evaluated on all of `xs`, fitted only on the
/// points selected by `keep`. The abscissa is scaled to [-1, 1] before the
/// Vandermonde build for conditioning.
fn polyfit_eval(xs: &[f64], ys: &[f64], keep: &[bool], order: usize) -> Result<Vec<f64>> {
    let lo = xs.first().copied().unwrap();
    let hi = xs.last().copied().unwrap();
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let scale = |x: f64| 2.0 * (x - lo) / span - 1.0;

    let n_keep = keep.iter().filter(|&&k| k).count();
    if order >= n_keep {
        return Err(Error::UnderdeterminedFit(format!(
            "polynomial order {order} with only {n_keep} unmasked points"
        )));
    }
    let ncoef = order + 1;
    let mut gram = Mat::zeros(ncoef, ncoef);
    let mut rhs = vec![0.0; ncoef];
    let mut pow = vec![0.0; ncoef];
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        if !keep[i] {
            continue;
        }
        let t = scale(x);
        pow[0] = 1.0;
        for k in 1..ncoef {
            pow[k] = pow[k - 1] * t;
        }
        for a in 0..ncoef {
            rhs[a] += pow[a] * y;
            for b in a..ncoef {
                let g = gram.at(a, b) + pow[a] * pow[b];
                gram.set(a, b, g);
            }
        }
    }
    for a in 0..ncoef {
        for b in 0..a {
            let v = gram.at(b, a);
            gram.set(a, b, v);
        }
    }
    let coef = solve_spd(&gram, &rhs)
        .map_err(|_| Error::UnderdeterminedFit("singular polynomial normal equations".into()))?;
    Ok(xs
        .iter()
        .map(|&x| {
            let t = scale(x);
            let mut acc = 0.0;
            for &c in coef.iter().rev() {
                acc = acc * t + c;
            }
            acc
        })
        .collect())
}

/// Subtract an iteratively fitted polynomial baseline.
///
/// Repeatedly fits a polynomial of `cfg.poly_order` to the working curve and
/// clips the curve to the fit wherever it lies above it, so peaks stop
/// attracting the baseline. Iteration ends when the maximum relative change
/// of the working curve drops below `cfg.tol` or after `cfg.max_iter` rounds.
/// Masked windows are excluded from the fit and zeroed in the output.
pub fn subtract_baseline(
    spectrum: &[f64],
    axis: &FreqAxis,
    cfg: &BaselineConfig,
) -> Result<Vec<f64>> {
    if spectrum.len() != axis.len() {
        return Err(Error::InvalidParameter(format!(
            "spectrum has {} points, axis has {}",
            spectrum.len(),
            axis.len()
        )));
    }
    cfg.validate(axis)?;
    let xs = axis.values();
    let keep: Vec<bool> = xs.iter().map(|&nu| !masked(cfg, nu)).collect();

    let mut work = spectrum.to_vec();
    let scale = spectrum.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut baseline = polyfit_eval(xs, &work, &keep, cfg.poly_order)?;
    for _ in 0..cfg.max_iter {
        let mut delta = 0.0f64;
        for i in 0..work.len() {
            if work[i] > baseline[i] {
                delta = delta.max((work[i] - baseline[i]).abs());
                work[i] = baseline[i];
            }
        }
        if delta / scale < cfg.tol {
            break;
        }
        baseline = polyfit_eval(xs, &work, &keep, cfg.poly_order)?;
    }

    Ok(spectrum
        .iter()
        .zip(&baseline)
        .zip(&keep)
        .map(|((s, b), k)| if *k { s - b } else { 0.0 })
        .collect())
}

/// Standard-normal-variate normalization: zero mean, unit sample standard
/// deviation (n−1 denominator).
pub fn snv_normalize(spectrum: &[f64]) -> Result<Vec<f64>> {
    if spectrum.len() < 2 {
        return Err(Error::InvalidParameter(
            "SNV needs at least two points".into(),
        ));
    }
    let m = mean(spectrum);
    let s = sample_std(spectrum);
    let scale = spectrum.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if s <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateInput(
            "zero-variance spectrum cannot be SNV-normalized".into(),
        ));
    }
    Ok(spectrum.iter().map(|v| (v - m) / s).collect())
}

/// Local-polynomial (Savitzky–Golay-style) smoothing on the index abscissa.
///
/// Each point is replaced by the value of a least-squares polynomial of
/// `poly_order` fitted over the centered window; edge points use shrunken
/// one-sided windows so the output has the input length.
pub fn smooth(spectrum: &[f64], window: usize, poly_order: usize) -> Result<Vec<f64>> {
    let n = spectrum.len();
    if window % 2 == 0 || window < 3 {
        return Err(Error::InvalidParameter(format!(
            "window must be an odd integer ≥ 3, got {window}"
        )));
    }
    if window > n {
        return Err(Error::InvalidParameter(format!(
            "window {window} exceeds spectrum length {n}"
        )));
    }
    if poly_order >= window {
        return Err(Error::InvalidParameter(format!(
            "poly_order {poly_order} must be smaller than window {window}"
        )));
    }
    let half = window / 2;
    let mut out = vec![0.0; n];
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let len = hi - lo + 1;
        let order = poly_order.min(len - 1);
        // Local fit in window-centered coordinates.
        let xs: Vec<f64> = (lo..=hi).map(|k| (k as f64 - i as f64) / half as f64).collect();
        let ncoef = order + 1;
        let mut gram = Mat::zeros(ncoef, ncoef);
        let mut rhs = vec![0.0; ncoef];
        let mut pow = vec![0.0; ncoef];
        for (k, &t) in xs.iter().enumerate() {
            pow[0] = 1.0;
            for p in 1..ncoef {
                pow[p] = pow[p - 1] * t;
            }
            let y = spectrum[lo + k];
            for a in 0..ncoef {
                rhs[a] += pow[a] * y;
                for b in a..ncoef {
                    let g = gram.at(a, b) + pow[a] * pow[b];
                    gram.set(a, b, g);
                }
            }
        }
        for a in 0..ncoef {
            for b in 0..a {
                let v = gram.at(b, a);
                gram.set(a, b, v);
            }
        }
        let coef = solve_spd(&gram, &rhs)
            .map_err(|_| Error::UnderdeterminedFit("singular smoothing window".into()))?;
        // Evaluate at t = 0: the constant coefficient.
        out[i] = coef[0];
    }
    Ok(out)
}

/// Intensity-weighted mean frequency of the strip-mean spectrum inside
/// `window`, after baseline subtraction. Returns the centroid in GHz.
fn reference_centroid(
    strip: &HyperCube,
    window: (f64, f64),
    strip_idx: usize,
) -> Result<f64> {
    let mean_spec = strip.mean_spectrum();
    let base_cfg = BaselineConfig::default();
    let corrected = subtract_baseline(&mean_spec, strip.axis(), &base_cfg)?;

    let mut in_window: Vec<(f64, f64)> = Vec::new();
    for (&nu, &v) in strip.axis().values().iter().zip(&corrected) {
        if nu >= window.0 && nu <= window.1 {
            in_window.push((nu, v));
        }
    }
    if in_window.len() < 3 {
        return Err(Error::ReferenceNotFound { strip: strip_idx });
    }
    let mut vals: Vec<f64> = in_window.iter().map(|(_, v)| *v).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = vals[vals.len() / 2];
    let max = vals[vals.len() - 1];
    if !(max > 3.0 * median.max(0.0)) || max <= 0.0 {
        return Err(Error::ReferenceNotFound { strip: strip_idx });
    }
    // Centroid over nonnegative window intensities.
    let mut wsum = 0.0;
    let mut nsum = 0.0;
    for (nu, v) in in_window {
        let w = v.max(0.0);
        wsum += w;
        nsum += w * nu;
    }
    Ok(nsum / wsum)
}

/// Resample `spectrum` at `axis + delta` by linear interpolation, clamping
/// to the end values outside the sampled range.
fn shift_spectrum(spectrum: &[f64], axis: &FreqAxis, delta: f64) -> Vec<f64> {
    let xs = axis.values();
    let n = xs.len();
    xs.iter()
        .map(|&nu| {
            let target = nu + delta;
            if target <= xs[0] {
                return spectrum[0];
            }
            if target >= xs[n - 1] {
                return spectrum[n - 1];
            }
            let j = xs.partition_point(|&x| x < target).max(1);
            let (x0, x1) = (xs[j - 1], xs[j]);
            let t = (target - x0) / (x1 - x0);
            spectrum[j - 1] * (1.0 - t) + spectrum[j] * t
        })
        .collect()
}

/// Correct inter-strip frequency drift against a reference peak and stitch
/// the strips into one cube along y.
///
/// For each strip the reference-peak centroid inside `reference_window` is
/// estimated on the strip-mean spectrum; every spectrum of the strip is then
/// shifted by linear interpolation so all centroids match the first strip.
pub fn correct_drift_stitch(
    strips: &[HyperCube],
    reference_window: (f64, f64),
) -> Result<HyperCube> {
    if strips.is_empty() {
        return Err(Error::InvalidParameter("no strips supplied".into()));
    }
    let first = &strips[0];
    for (i, s) in strips.iter().enumerate().skip(1) {
        if s.nx() != first.nx() {
            return Err(Error::InvalidParameter(format!(
                "strip {i} has nx={}, strip 0 has nx={}",
                s.nx(),
                first.nx()
            )));
        }
        if s.axis() != first.axis() {
            return Err(Error::InvalidParameter(format!(
                "strip {i} does not share the frequency axis of strip 0"
            )));
        }
    }
    if strips.len() == 1 {
        return Ok(first.clone());
    }

    let ref0 = reference_centroid(first, reference_window, 0)?;
    let ns = first.axis().len();
    let total_ny: usize = strips.iter().map(|s| s.ny()).sum();
    let mut data = Vec::with_capacity(total_ny * first.nx() * ns);
    for (i, strip) in strips.iter().enumerate() {
        let delta = if i == 0 {
            0.0
        } else {
            reference_centroid(strip, reference_window, i)? - ref0
        };
        for r in 0..strip.n_pixels() {
            if delta == 0.0 {
                data.extend_from_slice(strip.data().row(r));
            } else {
                data.extend(shift_spectrum(strip.data().row(r), strip.axis(), delta));
            }
        }
    }
    HyperCube::new(
        first.nx(),
        total_ny,
        first.axis().clone(),
        Mat::from_vec(total_ny * first.nx(), ns, data),
        first.meta().clone(),
    )
}

/// Apply baseline subtraction, then optional smoothing, then optional SNV to
/// every spectrum of a cube. This is the conditioning chain normally run
/// before fitting or unmixing.
pub fn preprocess_cube(
    cube: &HyperCube,
    baseline: Option<&BaselineConfig>,
    smooth_params: Option<(usize, usize)>,
    snv: bool,
) -> Result<HyperCube> {
    let ns = cube.axis().len();
    let mut data = Vec::with_capacity(cube.n_pixels() * ns);
    for r in 0..cube.n_pixels() {
        let mut spec = cube.data().row(r).to_vec();
        if let Some(cfg) = baseline {
            spec = subtract_baseline(&spec, cube.axis(), cfg)?;
        }
        if let Some((window, order)) = smooth_params {
            spec = smooth(&spec, window, order)?;
        }
        if snv {
            spec = snv_normalize(&spec)?;
        }
        data.extend(spec);
    }
    HyperCube::new(
        cube.nx(),
        cube.ny(),
        cube.axis().clone(),
        Mat::from_vec(cube.n_pixels(), ns, data),
        cube.meta().clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn axis(n: usize) -> FreqAxis {
        FreqAxis::linspace(0.5, 29.5, n).unwrap()
    }

    fn lorentzian(nu: f64, amp: f64, center: f64, fwhm: f64) -> f64 {
        let hw = fwhm / 2.0;
        amp * hw * hw / ((nu - center).powi(2) + hw * hw)
    }

    #[test]
    fn pure_polynomial_input_is_removed_entirely() {
        let ax = axis(120);
        let spec: Vec<f64> = ax
            .values()
            .iter()
            .map(|&x| 3.0 + 0.2 * x + 0.01 * x * x - 1e-4 * x * x * x)
            .collect();
        let out = subtract_baseline(&spec, &ax, &BaselineConfig::default()).unwrap();
        let max_in = spec.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_out = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_out < 1e-6 * max_in, "residual baseline {max_out}");
    }

    #[test]
    fn all_zero_spectrum_stays_zero() {
        let ax = axis(64);
        let out = subtract_baseline(&vec![0.0; 64], &ax, &BaselineConfig::default()).unwrap();
        assert!(out.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn peak_area_is_preserved_within_five_percent() {
        let ax = axis(200);
        let xs = ax.values();
        let peak: Vec<f64> = xs.iter().map(|&x| lorentzian(x, 5.0, 15.0, 1.2)).collect();
        let base: Vec<f64> = xs.iter().map(|&x| 1.0 + 0.05 * x + 0.002 * x * x).collect();
        let spec: Vec<f64> = peak.iter().zip(&base).map(|(p, b)| p + b).collect();
        let out = subtract_baseline(&spec, &ax, &BaselineConfig::default()).unwrap();

        // Trapezoid areas of the true peak and the recovered peak.
        let trapz = |ys: &[f64]| -> f64 {
            ys.windows(2)
                .zip(xs.windows(2))
                .map(|(y, x)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
                .sum()
        };
        let true_area = trapz(&peak);
        let got_area = trapz(&out);
        let rel = (got_area - true_area).abs() / true_area;
        assert!(rel < 0.05, "area error {rel}");
    }

    #[test]
    fn masked_windows_are_zeroed_and_excluded() {
        let ax = axis(100);
        let spec: Vec<f64> = ax
            .values()
            .iter()
            .map(|&x| 2.0 + lorentzian(x, 100.0, 0.6, 1.0))
            .collect();
        let cfg = BaselineConfig::default().with_rayleigh_masks(30.0);
        let out = subtract_baseline(&spec, &ax, &cfg).unwrap();
        for (&nu, &v) in ax.values().iter().zip(&out) {
            if nu <= 1.5 || nu >= 28.5 {
                assert_eq!(v, 0.0, "masked channel at {nu} not zeroed");
            }
        }
    }

    #[test]
    fn underdetermined_baseline_fit_is_an_error() {
        let ax = axis(10);
        let cfg = BaselineConfig { poly_order: 12, ..Default::default() };
        assert!(matches!(
            subtract_baseline(&vec![1.0; 10], &ax, &cfg),
            Err(Error::UnderdeterminedFit(_))
        ));
    }

    #[test]
    fn snv_of_simple_triple_is_exact() {
        let out = snv_normalize(&[1.0, 2.0, 3.0]).unwrap();
        assert!((out[0] + 1.0).abs() < 1e-14);
        assert!(out[1].abs() < 1e-14);
        assert!((out[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn snv_is_idempotent() {
        let mut rng = crate::rng::seeded(2);
        let spec: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..10.0)).collect();
        let once = snv_normalize(&spec).unwrap();
        let twice = snv_normalize(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn snv_output_statistics_match_recomputation() {
        let mut rng = crate::rng::seeded(3);
        for _ in 0..10 {
            let spec: Vec<f64> = (0..80).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let out = snv_normalize(&spec).unwrap();
            assert!(stats::mean(&out).abs() < 1e-10);
            assert!((stats::sample_std(&out) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn snv_rejects_constant_spectrum() {
        assert!(matches!(
            snv_normalize(&[4.2; 16]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn smoothing_reproduces_polynomials_exactly() {
        let spec: Vec<f64> = (0..60)
            .map(|i| {
                let t = i as f64;
                1.0 + 0.5 * t + 0.02 * t * t
            })
            .collect();
        let out = smooth(&spec, 11, 2).unwrap();
        for (a, b) in spec.iter().zip(&out) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn smoothing_reduces_white_noise_variance() {
        let mut rng = crate::rng::seeded(11);
        let spec: Vec<f64> = (0..400).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = smooth(&spec, 11, 2).unwrap();
        let var = |xs: &[f64]| {
            let m = stats::mean(xs);
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
        };
        assert!(var(&out) < var(&spec));
    }

    #[test]
    fn window_equal_to_length_gives_global_fit() {
        let spec: Vec<f64> = (0..15).map(|i| (i as f64) * 2.0 + 1.0).collect();
        let out = smooth(&spec, 15, 1).unwrap();
        for (a, b) in spec.iter().zip(&out) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn even_window_is_rejected() {
        assert!(smooth(&[0.0; 10], 4, 2).is_err());
        assert!(smooth(&[0.0; 10], 11, 2).is_err());
    }

    fn reference_strip(shift: f64, ny: usize) -> HyperCube {
        let ax = axis(200);
        let ns = ax.len();
        let nx = 6;
        let mut data = Vec::with_capacity(nx * ny * ns);
        for _ in 0..nx * ny {
            for &nu in ax.values() {
                data.push(
                    lorentzian(nu, 1.0, 7.19 + shift, 1.34)
                        + lorentzian(nu, 1.0, 30.0 - 7.19 + shift, 1.34),
                );
            }
        }
        HyperCube::new(nx, ny, ax, Mat::from_vec(nx * ny, ns, data), BTreeMap::new()).unwrap()
    }

    #[test]
    fn injected_drift_is_removed_by_stitching() {
        let a = reference_strip(0.0, 4);
        let b = reference_strip(0.3, 4);
        let stitched = correct_drift_stitch(&[a.clone(), b], (5.0, 9.5)).unwrap();
        assert_eq!(stitched.ny(), 8);
        let top = HyperCube::new(
            6,
            4,
            stitched.axis().clone(),
            Mat::from_vec(
                24,
                200,
                (0..24).flat_map(|r| stitched.data().row(r + 24).to_vec()).collect(),
            ),
            BTreeMap::new(),
        )
        .unwrap();
        let c0 = reference_centroid(&a, (5.0, 9.5), 0).unwrap();
        let c1 = reference_centroid(&top, (5.0, 9.5), 1).unwrap();
        assert!((c1 - c0).abs() < 0.02, "residual offset {}", (c1 - c0).abs());
    }

    #[test]
    fn single_strip_is_returned_unchanged() {
        let a = reference_strip(0.1, 3);
        let out = correct_drift_stitch(std::slice::from_ref(&a), (5.0, 9.5)).unwrap();
        assert_eq!(a, out);
    }

    #[test]
    fn mismatched_strip_widths_are_rejected() {
        let a = reference_strip(0.0, 3);
        let ax = axis(200);
        let b = HyperCube::new(
            4,
            3,
            ax.clone(),
            Mat::zeros(12, 200),
            BTreeMap::new(),
        )
        .unwrap();
        assert!(correct_drift_stitch(&[a, b], (5.0, 9.5)).is_err());
    }

    #[test]
    fn missing_reference_peak_names_the_strip() {
        let a = reference_strip(0.0, 3);
        let ax = axis(200);
        let flat = HyperCube::new(
            6,
            3,
            ax,
            Mat::from_vec(18, 200, vec![1.0; 18 * 200]),
            BTreeMap::new(),
        )
        .unwrap();
        match correct_drift_stitch(&[a, flat], (5.0, 9.5)) {
            Err(Error::ReferenceNotFound { strip }) => assert_eq!(strip, 1),
            other => panic!("expected ReferenceNotFound, got {other:?}"),
        }
    }

    #[test]
    fn stitching_preserves_total_pixel_count() {
        let strips = vec![reference_strip(0.0, 2), reference_strip(0.1, 5)];
        let total: usize = strips.iter().map(|s| s.n_pixels()).sum();
        let out = correct_drift_stitch(&strips, (5.0, 9.5)).unwrap();
        assert_eq!(out.n_pixels(), total);
    }
}
