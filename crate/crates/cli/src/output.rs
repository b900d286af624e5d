//! CSV and manifest writers. Outputs carry no timestamps so that reruns
//! with the same config and seed are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use sha2::{Digest, Sha256};

use holosim::calibration::CalibrationReport;
use holosim::device::ghz;
use holosim::dynamics::timeseries_csv;
use holosim::tomography::PauliVector;

use crate::experiments::{BellReport, PhaseSweep, Table1, Table1Row, ThetaPoint, Timeseries, TABLE1_STATES, TIMESERIES_STATES};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Files written into one output directory, listed in `manifest.toml`.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<(String, String)>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.root.join(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.files.push((name.to_string(), sha256_hex(contents.as_bytes())));
        Ok(p)
    }

    /// Writes `manifest.toml`: config hash, run parameters and file hashes.
    pub fn finish(self, run: &RunInfo) -> Result<PathBuf> {
        let mut s = String::new();
        writeln!(s, "version = \"{}\"", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(s, "experiment = \"{}\"", run.experiment).unwrap();
        writeln!(s, "config_sha256 = \"{}\"", run.config_hash).unwrap();
        writeln!(s, "seed = {}", run.seed).unwrap();
        writeln!(s, "shots = {}", run.shots).unwrap();
        writeln!(s, "frame = \"{}\"", run.frame).unwrap();
        writeln!(s, "overrides = [{}]", run.overrides.iter().map(|o| format!("{o:?}")).collect::<Vec<_>>().join(", ")).unwrap();
        writeln!(s, "warnings = [{}]", run.warnings.iter().map(|o| format!("{o:?}")).collect::<Vec<_>>().join(", ")).unwrap();
        for (name, hash) in &self.files {
            writeln!(s, "\n[[file]]\nname = \"{name}\"\nsha256 = \"{hash}\"").unwrap();
        }
        let p = self.root.join("manifest.toml");
        fs::write(&p, s).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunInfo {
    pub experiment: String,
    /// Hash of the scenario file text plus command-line overrides.
    pub config_hash: String,
    pub seed: u64,
    pub shots: usize,
    pub frame: String,
    pub overrides: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn calibration_csv(report: &CalibrationReport) -> String {
    let mut s = String::from("qubit,amplitude_v,center_ghz,center_err_khz,hwhm_mhz,curve_ghz\n");
    for (q, st) in report.stark.iter().enumerate() {
        for p in &st.points {
            writeln!(
                s,
                "{},{:.4},{:.9},{:.3},{:.4},{:.9}",
                q + 1,
                p.amplitude,
                p.center / ghz(1.0),
                p.center_err / ghz(1.0) * 1e6,
                p.hwhm / ghz(1.0) * 1e3,
                st.poly.frequency(p.amplitude) / ghz(1.0)
            )
            .unwrap();
        }
    }
    s
}

pub fn cross_stark_csv(report: &CalibrationReport) -> Option<String> {
    let cross = report.cross.as_ref()?;
    let mut s = String::from("theta_rad,offset1_khz,offset1_err_khz,offset2_khz,offset2_err_khz\n");
    for p in &cross.points {
        let k = |x: f64| x / ghz(1.0) * 1e6;
        writeln!(s, "{:.6},{:.3},{:.3},{:.3},{:.3}", p.theta, k(p.offset[0]), k(p.offset_err[0]), k(p.offset[1]), k(p.offset_err[1])).unwrap();
    }
    Some(s)
}

fn row_line(s: &mut String, r: &Table1Row) {
    write!(s, "{}", r.name).unwrap();
    for p in r.populations {
        write!(s, ",{:.4}", 100.0 * p).unwrap();
    }
    writeln!(s, ",{:.4}", 100.0 * r.populations.iter().sum::<f64>()).unwrap();
}

pub fn table1_csv(t: &Table1) -> String {
    let mut s = String::from("row");
    for (n, _) in TABLE1_STATES {
        write!(s, ",{n}_pct").unwrap();
    }
    s.push_str(",sum_pct\n");
    for r in &t.rows {
        row_line(&mut s, r);
    }
    if let Some(r) = &t.lab_check {
        let mut r = r.clone();
        r.name = "unitary_lab_frame".into();
        row_line(&mut s, &r);
    }
    s
}

pub fn theta_sweep_csv(points: &[ThetaPoint]) -> String {
    let mut s = String::from("variant,theta_rad,source_f,target_f,resonator_excited,fidelity\n");
    for p in points {
        writeln!(s, "{},{:.6},{:.8},{:.8},{:.3e},{:.8}", p.variant.name(), p.theta, p.source, p.target, p.resonator, p.fidelity).unwrap();
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| format!("{x:.9}"))
}

pub fn phase_sweep_csv(sweep: &PhaseSweep) -> String {
    let mut s = String::from("theta_rad,phi_set_rad,phi_measured_rad,error_rad,confident\n");
    for p in &sweep.points {
        writeln!(s, "{:.6},{:.6},{},{},{}", p.theta, p.phi_set, opt(p.phi_measured), opt(p.error), p.confident).unwrap();
    }
    s
}

pub fn bell_csv(r: &BellReport) -> String {
    let mut s = String::from("pauli,value\n");
    for (label, v) in PauliVector::labels().into_iter().zip(r.pauli.values) {
        writeln!(s, "{},{v:.6}", PauliVector::label_string(label)).unwrap();
    }
    s
}

pub fn bell_summary(r: &BellReport) -> String {
    format!(
        "theta_rad = {:.6}\nphi_rad = {:.6}\nreference_phase_rad = {:.6}\nshots = {}\nfidelity = {:.6}\nexact_fidelity = {:.6}\npostselected_fidelity = {:.6}\nleakage = {:.3e}\nmeasured_phase_rad = {}\nphase_confident = {}\n",
        r.theta,
        r.phi,
        r.reference_phase,
        r.shots,
        r.fidelity,
        r.exact_fidelity,
        r.postselected_fidelity,
        r.leakage,
        opt(r.phase.phase),
        r.phase.confident
    )
}

pub fn timeseries_output(t: &Timeseries) -> Result<String> {
    let labels: Vec<Vec<usize>> = TIMESERIES_STATES.iter().map(|(_, l)| l.to_vec()).collect();
    let names: Vec<String> = TIMESERIES_STATES.iter().map(|(n, _)| n.to_string()).collect();
    let base = timeseries_csv(&t.result, &labels, &names)?;
    let mut s = String::new();
    for (k, line) in base.lines().enumerate() {
        if k == 0 {
            writeln!(s, "{line},resonator_n").unwrap();
        } else {
            writeln!(s, "{line},{:.8}", t.resonator[k - 1]).unwrap();
        }
    }
    Ok(s)
}
