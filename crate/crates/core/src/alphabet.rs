//! Token id spaces shared by characters and radicals.
//!
//! Every space reserves id 0 for padding and id 1 for unknown tokens. A
//! tied [`Alphabet`] keeps characters and radicals in one space so that a
//! symbol used in both roles owns exactly one row; an untied alphabet keeps
//! two spaces whose ids are unrelated.

use std::collections::HashMap;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense token → id map over single-code-point tokens, ids 0/1 reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpace {
    ids: HashMap<char, u32>,
    tokens: Vec<String>,
}

impl TokenSpace {
    /// Builds a space from tokens in iteration order, skipping duplicates.
    pub fn from_tokens<I: IntoIterator<Item = char>>(iter: I) -> Self {
        let mut space = TokenSpace {
            ids: HashMap::new(),
            tokens: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
        };
        for c in iter {
            space.insert(c);
        }
        space
    }

    fn insert(&mut self, c: char) -> u32 {
        if let Some(&id) = self.ids.get(&c) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(c.to_string());
        self.ids.insert(c, id);
        id
    }

    pub fn id(&self, c: char) -> Option<u32> {
        self.ids.get(&c).copied()
    }

    pub fn id_or_unk(&self, c: char) -> u32 {
        self.id(c).unwrap_or(UNK_ID)
    }

    pub fn contains(&self, c: char) -> bool {
        self.ids.contains_key(&c)
    }

    /// Total row count including the two reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == 2
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// All token strings in id order, reserved markers first.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Non-reserved tokens as characters, in id order.
    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.tokens[2..].iter().map(|t| t.chars().next().unwrap())
    }
}

/// Character/radical id spaces for one model or embedding set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    chars: TokenSpace,
    /// `None` when tied: both roles resolve through `chars`.
    radicals: Option<TokenSpace>,
}

impl Alphabet {
    /// One shared space: union of characters and radicals, characters first.
    pub fn tied<C, R>(chars: C, radicals: R) -> Self
    where
        C: IntoIterator<Item = char>,
        R: IntoIterator<Item = char>,
    {
        Alphabet {
            chars: TokenSpace::from_tokens(chars.into_iter().chain(radicals)),
            radicals: None,
        }
    }

    /// Two disjoint id spaces with unrelated ids.
    pub fn untied<C, R>(chars: C, radicals: R) -> Self
    where
        C: IntoIterator<Item = char>,
        R: IntoIterator<Item = char>,
    {
        Alphabet {
            chars: TokenSpace::from_tokens(chars),
            radicals: Some(TokenSpace::from_tokens(radicals)),
        }
    }

    pub(crate) fn from_spaces(chars: TokenSpace, radicals: Option<TokenSpace>) -> Self {
        Alphabet { chars, radicals }
    }

    pub fn is_tied(&self) -> bool {
        self.radicals.is_none()
    }

    pub fn char_space(&self) -> &TokenSpace {
        &self.chars
    }

    pub fn radical_space(&self) -> &TokenSpace {
        self.radicals.as_ref().unwrap_or(&self.chars)
    }

    /// Rows of the packed input table: one space when tied, both when not.
    pub fn input_rows(&self) -> usize {
        match &self.radicals {
            None => self.chars.len(),
            Some(r) => self.chars.len() + r.len(),
        }
    }

    /// Packed input-table row for a token in its character role.
    pub fn char_row(&self, c: char) -> usize {
        self.chars.id_or_unk(c) as usize
    }

    /// Packed input-table row for a token in its radical role.
    pub fn radical_row(&self, c: char) -> usize {
        match &self.radicals {
            None => self.chars.id_or_unk(c) as usize,
            Some(r) => self.chars.len() + r.id_or_unk(c) as usize,
        }
    }
}
