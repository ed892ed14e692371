use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bpu_core::connectome::{
    load_modality_map, PolarityOptions, Pool, SignedConnectome, EDGES_FILE, NODES_FILE, POLARITY_FILE,
};
use bpu_core::dcsbm;
use bpu_core::surrogate::{self, SurrogateSpec};

use crate::args::{ConnectomeArgs, ExpandArgs, InfoArgs, SynthArgs};
use crate::error::{CliError, Result};
use crate::run::RunContext;
use crate::Env;

/// Where the connectome of a run came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConnectomeSource {
    Dir { path: PathBuf },
    Surrogate { seed: u64 },
}

/// Resolves `--connectome` / `--surrogate`, falling back to
/// `<data-root>/connectome`, and records the files read.
pub fn load_connectome(
    a: &ConnectomeArgs,
    data_root: &Path,
    mut ctx: Option<&mut RunContext>,
) -> Result<(SignedConnectome, ConnectomeSource)> {
    let (mut c, source) = match a.surrogate {
        Some(seed) => {
            log::warn!("using the synthetic stand-in connectome (seed {seed}), not measured wiring");
            (surrogate::generate(&SurrogateSpec::larva(seed))?, ConnectomeSource::Surrogate { seed })
        }
        None => {
            let dir = a.connectome.clone().unwrap_or_else(|| data_root.join("connectome"));
            if !dir.join(NODES_FILE).exists() {
                return Err(CliError::Data(format!(
                    "no connectome at {}: pass --connectome DIR, or --surrogate SEED for the synthetic stand-in",
                    dir.display()
                )));
            }
            let c = SignedConnectome::load_dir(&dir, PolarityOptions { default_sign: a.default_sign })?;
            if let Some(ctx) = ctx.as_deref_mut() {
                for name in [NODES_FILE, EDGES_FILE, POLARITY_FILE] {
                    let p = dir.join(name);
                    if p.exists() {
                        ctx.input(&p)?;
                    }
                }
            }
            (c, ConnectomeSource::Dir { path: dir })
        }
    };
    if let Some(map) = &a.modality_map {
        c = c.with_modalities(&load_modality_map(map)?)?;
        if let Some(ctx) = ctx.as_deref_mut() {
            ctx.input(map)?;
        }
    }
    Ok((c, source))
}

/// Registers the three graph files and writes them into the staging area.
fn stage_graph(ctx: &mut RunContext, c: &SignedConnectome) -> Result<()> {
    let dir = ctx.output(NODES_FILE)?.parent().expect("staged file has a parent").to_path_buf();
    ctx.output(EDGES_FILE)?;
    ctx.output(POLARITY_FILE)?;
    c.write_dir(&dir)?;
    Ok(())
}

pub fn info(a: &InfoArgs) -> Result<()> {
    let c = SignedConnectome::load_dir(&a.dir, PolarityOptions { default_sign: a.default_sign })?;
    print!("{}", c.summary());
    Ok(())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    factor: usize,
    seed: u64,
    source: &'a ConnectomeSource,
    n_original: usize,
    n: usize,
    edges: usize,
    params: &'a dcsbm::DcsbmParams,
    refit: &'a dcsbm::RefitReport,
}

pub fn expand(env: &Env, a: &ExpandArgs) -> Result<()> {
    if !(1..=5).contains(&a.factor) {
        return Err(CliError::Data(format!("expansion factor must be in 1..=5, got {}", a.factor)));
    }
    env.experiment("expand", a, |ctx| {
        ctx.seeds(&[a.seed]);
        let (c, source) = load_connectome(&a.connectome, &env.data_root, Some(ctx))?;
        let exp = dcsbm::expand(&c, a.factor, a.seed)?;
        let refit = dcsbm::refit_check(&exp, &exp.params);
        stage_graph(ctx, &exp.graph)?;
        let sidecar = Sidecar {
            factor: a.factor,
            seed: a.seed,
            source: &source,
            n_original: exp.n_original,
            n: exp.graph.n(),
            edges: exp.graph.edge_count(),
            params: &exp.params,
            refit: &refit,
        };
        ctx.write("dcsbm.json", serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n")?;

        println!("{} -> {} neurons, {} edges", exp.n_original, exp.graph.n(), exp.graph.edge_count());
        if !refit.no_new_nodes {
            println!("from,to,expected_edges,omega,omega_hat,omega_rel_err,p,p_hat");
            for p in &refit.pairs {
                let p_hat = p.p_hat.map(|v| format!("{v:.4}")).unwrap_or_default();
                println!(
                    "{},{},{:.1},{:.6},{:.6},{:.4},{:.4},{p_hat}",
                    p.from, p.to, p.expected_edges, p.omega, p.omega_hat, p.omega_rel_err, p.p
                );
            }
        }
        Ok(())
    })
}

pub fn synth(env: &Env, a: &SynthArgs) -> Result<()> {
    env.experiment("synth-connectome", a, |ctx| {
        ctx.seeds(&[a.seed]);
        let c = surrogate::generate(&SurrogateSpec::larva(a.seed))?;
        stage_graph(ctx, &c)?;
        let mut map = String::from("# Sensory modality tags; edit and pass with --modality-map.\nid,modality\n");
        for &i in c.pool(Pool::Sensory) {
            let n = &c.neurons()[i];
            if let Some(m) = &n.modality {
                map.push_str(&format!("{},{m}\n", n.id));
            }
        }
        ctx.write("modality-map.csv", map)?;
        print!("{}", c.summary());
        Ok(())
    })
}
