mod list;
mod search;

pub use list::{
    generate_list, generate_per_attribute, item_ids, read_generations, write_generations, GenerationItem,
    GenerationList, Generator,
};
pub use search::{
    apply_temperature, beam_search, decode, greedy, temperature_sample, DecodeMethod, Hypothesis, DEFAULT_MAX_LEN,
};
