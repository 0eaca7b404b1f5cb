use gisbo::bridge::echo::{serve_stdio, EchoOptions, Outcome};

fn main() {
    let opts = match EchoOptions::from_args(std::env::args().skip(1)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("gisbo-echo-server: {e}");
            std::process::exit(2);
        }
    };
    match serve_stdio(&opts) {
        Ok(Outcome::Crashed) => std::process::exit(101),
        Ok(_) => {}
        Err(e) => {
            eprintln!("gisbo-echo-server: {e}");
            std::process::exit(1);
        }
    }
}
