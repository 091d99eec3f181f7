//! Mapping element values to payload bytes.
//!
//! Plain data (integers, floats, `bool`, fixed arrays, tuples and records
//! registered with [`plain_record!`](crate::plain_record)) implements
//! [`Plain`] and is encoded field by field, little-endian, without padding.
//! Heap-structured values only travel through the explicit
//! [`Serialized`](crate::serialization::Serialized) adapter.

use crate::error::CodecError;

/// A fixed-width element that can be copied into a byte payload.
pub trait Plain: Copy + Send + Sync + 'static {
    /// Encoded size in bytes.
    const WIDTH: usize;

    fn write_le(&self, out: &mut Vec<u8>);

    /// Reads one element from exactly `WIDTH` bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! plain_number {
    ($($t:ty),*) => {$(
        impl Plain for $t {
            const WIDTH: usize = std::mem::size_of::<$t>();

            #[inline]
            fn write_le(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            #[inline]
            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("element width"))
            }
        }
    )*};
}

plain_number!(u8, i8, u16, i16, u32, i32, u64, i64, u128, i128, f32, f64);

/// Encoded as a little-endian `u64` on every platform.
impl Plain for usize {
    const WIDTH: usize = 8;

    fn write_le(&self, out: &mut Vec<u8>) {
        (*self as u64).write_le(out)
    }

    fn read_le(bytes: &[u8]) -> Self {
        u64::read_le(bytes) as usize
    }
}

impl Plain for bool {
    const WIDTH: usize = 1;

    fn write_le(&self, out: &mut Vec<u8>) {
        out.push(*self as u8)
    }

    fn read_le(bytes: &[u8]) -> Self {
        bytes[0] != 0
    }
}

impl Plain for () {
    const WIDTH: usize = 0;

    fn write_le(&self, _: &mut Vec<u8>) {}

    fn read_le(_: &[u8]) -> Self {}
}

impl<T: Plain, const N: usize> Plain for [T; N] {
    const WIDTH: usize = T::WIDTH * N;

    fn write_le(&self, out: &mut Vec<u8>) {
        for v in self {
            v.write_le(out);
        }
    }

    fn read_le(bytes: &[u8]) -> Self {
        std::array::from_fn(|i| T::read_le(&bytes[i * T::WIDTH..(i + 1) * T::WIDTH]))
    }
}

macro_rules! plain_tuple {
    ($($name:ident . $idx:tt),+) => {
        impl<$($name: Plain),+> Plain for ($($name,)+) {
            const WIDTH: usize = 0 $(+ $name::WIDTH)+;

            fn write_le(&self, out: &mut Vec<u8>) {
                $(self.$idx.write_le(out);)+
            }

            #[allow(unused_assignments)]
            fn read_le(bytes: &[u8]) -> Self {
                let mut rest = bytes;
                ($({
                    let (head, tail) = rest.split_at($name::WIDTH);
                    rest = tail;
                    $name::read_le(head)
                },)+)
            }
        }
    };
}

plain_tuple!(A.0);
plain_tuple!(A.0, B.1);
plain_tuple!(A.0, B.1, C.2);
plain_tuple!(A.0, B.1, C.2, D.3);

/// Registers a `Copy` struct as a plain record, encoded field by field in
/// the listed order with no padding bytes.
///
/// ```
/// use commkit::plain_record;
///
/// #[derive(Debug, Clone, Copy, PartialEq)]
/// struct Sample {
///     id: i32,
///     weight: f64,
///     tag: [u8; 3],
/// }
/// plain_record!(Sample { id: i32, weight: f64, tag: [u8; 3] });
///
/// let bytes = commkit::datatype::encode(&[Sample { id: 1, weight: 0.5, tag: *b"abc" }]);
/// assert_eq!(bytes.len(), 4 + 8 + 3);
/// ```
#[macro_export]
macro_rules! plain_record {
    ($ty:ident { $($field:ident : $fty:ty),+ $(,)? }) => {
        impl $crate::datatype::Plain for $ty {
            const WIDTH: usize = 0 $(+ <$fty as $crate::datatype::Plain>::WIDTH)+;

            fn write_le(&self, out: &mut Vec<u8>) {
                $(<$fty as $crate::datatype::Plain>::write_le(&self.$field, out);)+
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut at = 0usize;
                $(
                    let w = <$fty as $crate::datatype::Plain>::WIDTH;
                    let $field = <$fty as $crate::datatype::Plain>::read_le(&bytes[at..at + w]);
                    at += w;
                )+
                let _ = at;
                $ty { $($field),+ }
            }
        }
    };
}

/// The element whose encoding is all zero bytes.
pub fn zeroed<T: Plain>() -> T {
    const CHUNK: [u8; 64] = [0; 64];
    if T::WIDTH <= CHUNK.len() {
        T::read_le(&CHUNK[..T::WIDTH])
    } else {
        T::read_le(&vec![0u8; T::WIDTH])
    }
}

/// Appends the encoding of `values` to `out`.
pub fn encode_into<T: Plain>(values: &[T], out: &mut Vec<u8>) {
    out.reserve(values.len() * T::WIDTH);
    for v in values {
        v.write_le(out);
    }
}

pub fn encode<T: Plain>(values: &[T]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * T::WIDTH);
    encode_into(values, &mut out);
    out
}

/// Number of elements in a payload of `len` bytes.
pub fn element_count<T: Plain>(len: usize) -> Result<usize, CodecError> {
    match T::WIDTH {
        0 if len == 0 => Ok(0),
        0 => Err(CodecError::IndivisibleLength { len, width: 0 }),
        w if len.is_multiple_of(w) => Ok(len / w),
        w => Err(CodecError::IndivisibleLength { len, width: w }),
    }
}

pub fn decode<T: Plain>(bytes: &[u8]) -> Result<Vec<T>, CodecError> {
    element_count::<T>(bytes.len())?;
    if T::WIDTH == 0 {
        return Ok(Vec::new());
    }
    Ok(bytes.chunks_exact(T::WIDTH).map(T::read_le).collect())
}

/// Decodes into an existing slice of exactly the right length.
pub fn decode_into<T: Plain>(bytes: &[u8], out: &mut [T]) -> Result<(), CodecError> {
    let n = element_count::<T>(bytes.len())?;
    debug_assert_eq!(n, out.len());
    if T::WIDTH > 0 {
        for (slot, chunk) in out.iter_mut().zip(bytes.chunks_exact(T::WIDTH)) {
            *slot = T::read_le(chunk);
        }
    }
    Ok(())
}

/// A value that can be carried as one message payload: either a sequence of
/// plain elements or an explicitly serialized value.
pub trait Codec: Sized {
    /// Bytes per element, or `None` for variable-width encodings.
    const ELEMENT_WIDTH: Option<usize>;

    fn encode_payload(&self) -> Result<Vec<u8>, CodecError>;

    fn decode_payload(bytes: &[u8]) -> Result<Self, CodecError>;
}

impl<T: Plain> Codec for Vec<T> {
    const ELEMENT_WIDTH: Option<usize> = Some(T::WIDTH);

    fn encode_payload(&self) -> Result<Vec<u8>, CodecError> {
        Ok(encode(self))
    }

    fn decode_payload(bytes: &[u8]) -> Result<Self, CodecError> {
        decode(bytes)
    }
}
