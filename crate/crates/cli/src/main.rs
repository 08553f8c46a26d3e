mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

/// Error classes map to exit codes: usage 1, data 2, internal 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "dyslab", version, about = "Dysarthric speech detection, severity grading and translation")]
struct Cli {
    /// key=value file supplying flags of the chosen subcommand; flags on the
    /// command line override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Debug)]
pub struct TrainOpts {
    /// Dataset root; defaults to $DYSLAB_DATA.
    #[arg(long, env = "DYSLAB_DATA", value_name = "DIR")]
    pub data_root: PathBuf,
    /// Where the final weights go; reports and the best-epoch weights are
    /// written next to it.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = dyslab_core::models::DEFAULT_SEED)]
    pub seed: u64,
    /// Train,val,test fractions.
    #[arg(long, default_value = "0.7,0.2,0.1")]
    pub split: String,
}

#[derive(Args, Clone, Debug)]
pub struct UNetOpts {
    /// Channels of the first U-Net level.
    #[arg(long)]
    pub base: Option<usize>,
    /// Number of down/up-sampling levels.
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the MFCC or dB-mel grid of a WAV file as DYST.
    Extract {
        #[arg(long = "in", value_name = "WAV")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// mfcc or mel.
        #[arg(long, default_value = "mfcc")]
        features: String,
    },
    /// Train the detector on <data-root>/<class>/*.wav (two classes).
    TrainDetect(TrainOpts),
    /// Train the severity classifier on <data-root>/<class>/*.wav (four classes).
    TrainSeverity(TrainOpts),
    /// Train the spectrogram translator on <data-root>/{dysarthric,clean}/.
    TrainS2s {
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        unet: UNetOpts,
    },
    /// Continue training a translator from --init-weights on new pairs.
    FinetuneS2s {
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        unet: UNetOpts,
        #[arg(long, value_name = "FILE")]
        init_weights: PathBuf,
    },
    /// Print `label p=0.00` for one WAV file.
    InferDetect {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long = "in", value_name = "WAV")]
        input: PathBuf,
    },
    /// Print the severity label and the four class probabilities.
    InferSeverity {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long = "in", value_name = "WAV")]
        input: PathBuf,
    },
    /// Translate a WAV file; writes <out>.dyst, <out>.pgm and <out>.wav.
    Translate {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long = "in", value_name = "WAV")]
        input: PathBuf,
        #[arg(long, value_name = "PREFIX")]
        out: PathBuf,
        /// Griffin-Lim iterations.
        #[arg(long, default_value_t = dyslab_core::dsp::DEFAULT_GRIFFIN_LIM_ITERS)]
        iters: usize,
    },
    /// Render a Grad-CAM overlay of the severity model as PPM.
    Gradcam {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long = "in", value_name = "WAV")]
        input: PathBuf,
        #[arg(long, value_name = "PPM")]
        out: PathBuf,
        /// very_low, low, medium or high; defaults to the predicted class.
        #[arg(long)]
        class: Option<String>,
        /// Convolution layer name; defaults to the deepest one.
        #[arg(long)]
        layer: Option<String>,
    },
    /// Corpus WER of a `reference<TAB>hypothesis` file.
    EvalWer {
        #[arg(long, value_name = "TSV")]
        pairs: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        /// Directory holding detector.dysw, severity.dysw and unet.dysw
        /// with their manifests.
        #[arg(long, value_name = "DIR")]
        model_dir: PathBuf,
        #[arg(long, default_value_t = dyslab_service::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::Ipv4Addr,
        /// Allowed browser origin; any origin when absent.
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    use commands as c;
    match cli.cmd {
        Cmd::Extract { input, out, features } => c::extract(&input, &out, &features),
        Cmd::TrainDetect(t) => c::train_detect(&t),
        Cmd::TrainSeverity(t) => c::train_severity(&t),
        Cmd::TrainS2s { train, unet } => c::train_s2s(&train, &unet),
        Cmd::FinetuneS2s {
            train,
            unet,
            init_weights,
        } => c::finetune_s2s(&train, &unet, &init_weights),
        Cmd::InferDetect { model, input } => c::infer_detect(&model, &input),
        Cmd::InferSeverity { model, input } => c::infer_severity(&model, &input),
        Cmd::Translate {
            model,
            input,
            out,
            iters,
        } => c::translate(&model, &input, &out, iters),
        Cmd::Gradcam {
            model,
            input,
            out,
            class,
            layer,
        } => c::gradcam(&model, &input, &out, class.as_deref(), layer.as_deref()),
        Cmd::EvalWer { pairs } => c::eval_wer(&pairs),
        Cmd::Serve {
            model_dir,
            port,
            host,
            cors_origin,
        } => c::serve(model_dir, port, host, cors_origin),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args().collect(), &Cli::command()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
