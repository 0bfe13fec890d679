//! `mps-sso inspect`: Schmidt data of an MPS file — per-bond spectra,
//! entanglement entropies, and best-possible chi_k preparation fidelities.

use std::path::PathBuf;

use clap::Args;

use mps_sso::io::load_mps;
use mps_sso::{Error, Result};

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// MPS JSON file to inspect.
    #[arg(long)]
    mps: PathBuf,

    /// Restrict output to one interior bond (0-based; bond b cuts between
    /// sites b and b+1).
    #[arg(long)]
    bond: Option<usize>,

    /// Machine-readable one-object output on stdout.
    #[arg(long)]
    json: bool,
}

pub fn run(args: InspectArgs) -> Result<()> {
    let mps = load_mps(&args.mps)?;
    let n = mps.n();
    let spectra = mps.schmidt_spectra()?;
    let entropies = spectra.entropies();

    let bonds: Vec<usize> = match args.bond {
        Some(b) => {
            if b + 1 >= n {
                return Err(Error::validation(format!(
                    "bond {b} out of range: a {n}-site state has bonds 0..{}",
                    n.saturating_sub(1)
                )));
            }
            vec![b]
        }
        None => (0..spectra.n_bonds()).collect(),
    };

    let f2 = mps.chi_k_fidelity(2)?;
    let f4 = mps.chi_k_fidelity(4)?;

    if args.json {
        let bond_objects: Vec<serde_json::Value> = bonds
            .iter()
            .map(|&b| {
                serde_json::json!({
                    "bond": b,
                    "schmidt_values": spectra.bond(b),
                    "entropy": entropies[b],
                })
            })
            .collect();
        let out = serde_json::json!({
            "n": n,
            "bond_dims": mps.bond_dims(),
            "norm_log": mps.norm_log(),
            "bonds": bond_objects,
            "f_chi2": f2,
            "f_chi4": f4,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("n         = {n}");
        println!("bond dims = {:?}", mps.bond_dims());
        println!("F_chi2    = {f2:.12}");
        println!("F_chi4    = {f4:.12}");
        for &b in &bonds {
            println!("bond {b} (sites {b}|{}):", b + 1);
            println!("  entropy = {:.12}", entropies[b]);
            let values = spectra.bond(b);
            for (i, lambda) in values.iter().enumerate() {
                println!("  lambda[{i}] = {lambda:.12e}");
            }
        }
    }
    Ok(())
}
