use std::io;

fn main() {
    let env = |key: &str| std::env::var(key).ok();
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
    let mut io = smellhunter_cli::Io { out: &mut out, err: &mut err, env: &env };
    let code = smellhunter_cli::run(std::env::args_os(), &mut io);
    std::process::exit(code as i32);
}
