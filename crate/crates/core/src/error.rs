use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid battery parameters: {0}")]
    InvalidBattery(String),

    #[error("degenerate battery: s_star ({s_star}) >= s_max ({s_max}), no constant-voltage region")]
    DegenerateBattery { s_star: f64, s_max: f64 },

    #[error("infeasible decision {decision} kWh at SOC {soc} kWh: result {result} kWh outside [{s_min}, {s_max}]")]
    InfeasibleDecision {
        soc: f64,
        decision: f64,
        result: f64,
        s_min: f64,
        s_max: f64,
    },

    #[error("negative load {load} kWh (net demand {net_demand}, decision {decision})")]
    NegativeLoad {
        load: f64,
        net_demand: f64,
        decision: f64,
    },

    #[error("total load is zero, ratio undefined")]
    ZeroTotalLoad,

    #[error("reference bill is zero, savings undefined")]
    ZeroReference,

    #[error("SOC grid resolution {resolution} exceeds battery range {range}")]
    Resolution { resolution: f64, range: f64 },

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
